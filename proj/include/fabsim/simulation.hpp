#pragma once

// Scenario description and the run that wires traffic, the wireless link,
// safety supervision, the production line and the compliance assessment
// into one engine.

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fabsim/compliance.hpp"
#include "fabsim/errors.hpp"
#include "fabsim/nr_frame.hpp"
#include "fabsim/production_line.hpp"
#include "fabsim/radio_link.hpp"
#include "fabsim/safety.hpp"
#include "fabsim/sim_core.hpp"
#include "fabsim/traffic.hpp"

namespace fabsim {

using namespace std::chrono_literals;

struct NrSpec {
  int numerology = 1;
  int carrier_prb = 106;
  std::vector<nr::BandwidthPart> bwps;
  std::vector<std::pair<int, nr::SlotFormat>> extra_slot_formats;
  int slot_format = 28;

  nr::SlotFormatTable slot_table() const {
    auto t = nr::SlotFormatTable::builtin();
    for (const auto& [i, f] : extra_slot_formats) t.add(i, f);
    return t;
  }
  friend bool operator==(const NrSpec&, const NrSpec&) = default;
};

struct CurveSpec {
  link::Waveform waveform = link::Waveform::POfdm;
  std::string channel;
  std::vector<link::BlerAnchor> anchors;
  double floor = 0.0;
  double tail_slope = 1.0;
  friend bool operator==(const CurveSpec&, const CurveSpec&) = default;
};

struct TrafficSpec {
  bool measured = true;  // expand to the measured catalog plus cameras
  traffic::CameraOptions camera;
  std::vector<traffic::TrafficProfile> streams;  // used when !measured

  std::vector<traffic::TrafficProfile> catalog() const {
    return measured ? traffic::measured_catalog(camera) : streams;
  }
  friend bool operator==(const TrafficSpec&, const TrafficSpec&) = default;
};

// Robot bus coupler (a) to safety controller (b) over the wireless leg.
struct SafetySpec {
  std::string endpoint_a = "Hilscher";
  std::string endpoint_b = "PhoenixC";
  Duration watchdog = 12ms;
  std::optional<Duration> retry_window;  // defaults to one cycle
  friend bool operator==(const SafetySpec&, const SafetySpec&) = default;
};

struct ScriptAction {
  enum class Kind { Estop, Reset, Obstacle, RobotReset, Fault, Repair, OutOfService };
  Duration at{};
  Kind kind = Kind::Estop;
  std::string target;           // endpoint, loop or module id
  std::string sensor;           // Obstacle
  Duration duration{};          // Obstacle
  friend bool operator==(const ScriptAction&, const ScriptAction&) = default;
};

inline std::string_view to_string(ScriptAction::Kind k) {
  switch (k) {
    case ScriptAction::Kind::Estop: return "estop";
    case ScriptAction::Kind::Reset: return "reset";
    case ScriptAction::Kind::Obstacle: return "obstacle";
    case ScriptAction::Kind::RobotReset: return "robot_reset";
    case ScriptAction::Kind::Fault: return "fault";
    case ScriptAction::Kind::Repair: return "repair";
    case ScriptAction::Kind::OutOfService: return "out_of_service";
  }
  return "?";
}

inline ScriptAction::Kind parse_script_kind(std::string_view s) {
  using K = ScriptAction::Kind;
  for (K k : {K::Estop, K::Reset, K::Obstacle, K::RobotReset, K::Fault, K::Repair, K::OutOfService}) {
    if (to_string(k) == s) return k;
  }
  throw InvalidArgument("unknown script action '" + std::string(s) +
                        "' (estop, reset, obstacle, robot_reset, fault, repair, out_of_service)");
}

struct Scenario {
  std::uint64_t seed = 42;
  Duration horizon = 60s;
  NrSpec nr;
  link::LinkConfig link;
  std::vector<link::OutageWindow> outages;
  std::vector<CurveSpec> bler_curves;                           // added to or replacing shipped curves
  std::optional<std::vector<link::ThroughputAnchor>> throughput;  // replaces the shipped table
  TrafficSpec traffic;
  factory::FactoryConfig factory;
  SafetySpec safety;
  compliance::Area service_area{20.0, 20.0};
  compliance::JitterMode jitter = compliance::JitterMode::P99MinusMin;
  std::vector<ScriptAction> script;

  static Scenario defaults() {
    Scenario s;
    s.link.tti = nr::TtiConfig::from_duration(500us);
    s.link.processing_delay = 1ms;
    s.nr.bwps = {
        {"embb", 30, nr::CyclicPrefix::Normal, 0, 80, 0, 0},
        {"urllc", 60, nr::CyclicPrefix::Normal, 80, 26, 1, 80},
    };
    s.factory = factory::FactoryConfig::defaults();
    s.script = {
        {40s, ScriptAction::Kind::Estop, "island2.spring", {}, {}},
        {45s, ScriptAction::Kind::Reset, "island2", {}, {}},
    };
    return s;
  }

  link::LinkModel link_model() const {
    auto m = link::LinkModel::defaults();
    for (const auto& c : bler_curves) m.set_curve(c.waveform, c.channel, link::BlerCurve{c.anchors, c.floor, c.tail_slope});
    if (throughput) m.set_throughput(link::ThroughputTable{*throughput});
    return m;
  }

  // Throws InvalidArgument naming the offending part.
  void validate() const {
    if (horizon < Duration::zero()) throw InvalidArgument("horizon must be non-negative");
    if (nr.numerology < 0 || nr.numerology > nr::kMaxNumerology) throw InvalidArgument("numerology must be 0..6");
    if (nr.carrier_prb <= 0) throw InvalidArgument("carrier_prb must be positive");
    const auto report = nr::validate_bwp_partition(nr.carrier_prb, nr.bwps);
    if (!report.valid()) throw InvalidArgument("bandwidth parts invalid: " + report.describe(nr.bwps));
    if (!nr.slot_table().contains(nr.slot_format)) {
      throw InvalidArgument("slot format " + std::to_string(nr.slot_format) + " is not in the table");
    }
    link.validate();
    const auto model = link_model();
    (void)model.bler(link);
    (void)model.throughput(link);
    for (const auto& w : outages) {
      if (w.to < w.from) throw InvalidArgument("outage window ends before it starts");
    }
    const auto cat = traffic.catalog();
    std::set<std::string> names;
    for (const auto& p : cat) {
      p.validate();
      if (!names.insert(p.name).second) throw InvalidArgument("duplicate stream " + p.name);
      if (p.name == compliance::kAggregate) throw InvalidArgument("stream name 'aggregate' is reserved");
    }
    factory.validate();
    if (safety.watchdog <= Duration::zero()) throw InvalidArgument("watchdog must be positive");
    if (safety.retry_window && *safety.retry_window < Duration::zero()) {
      throw InvalidArgument("retry window must be non-negative");
    }
    if (service_area.width_m <= 0 || service_area.depth_m <= 0) throw InvalidArgument("service area must be positive");
    std::set<std::string> modules, docks, islands;
    for (const auto& i : factory.islands) {
      islands.insert(i.id);
      docks.insert(i.id + ".dock");
      for (const auto& m : i.modules) modules.insert(i.id + "." + m.name);
    }
    using K = ScriptAction::Kind;
    for (const auto& a : script) {
      if (a.at < Duration::zero()) throw InvalidArgument("script action time must be non-negative");
      const std::string what = "script action " + std::string(to_string(a.kind)) + " at " +
                               std::to_string(a.at.count()) + " ns: ";
      const bool robot_target = a.target.empty() || a.target == factory.robot_id;
      switch (a.kind) {
        case K::Obstacle:
          (void)safety::parse_sensor(a.sensor);
          if (a.duration < Duration::zero()) throw InvalidArgument(what + "duration must be non-negative");
          if (!robot_target) throw InvalidArgument(what + "unknown robot " + a.target);
          break;
        case K::RobotReset:
          if (!robot_target) throw InvalidArgument(what + "unknown robot " + a.target);
          break;
        case K::Estop:
          if (a.target != factory.robot_id && !modules.count(a.target) && !docks.count(a.target)) {
            throw InvalidArgument(what + "unknown endpoint '" + a.target + "'");
          }
          break;
        case K::Reset:
          if (!islands.count(a.target)) throw InvalidArgument(what + "unknown safety loop '" + a.target + "'");
          break;
        case K::Fault:
        case K::Repair:
        case K::OutOfService:
          if (!modules.count(a.target)) throw InvalidArgument(what + "unknown module '" + a.target + "'");
          break;
      }
    }
  }

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

struct StreamInfo {
  traffic::TrafficProfile profile;
  std::optional<safety::Direction> safety_direction;  // set for the supervised PDU streams
};

struct RunResult {
  Scenario scenario;
  SimSummary summary;
  std::vector<StreamInfo> streams;
  std::vector<traffic::PacketRecord> packets;  // grouped by stream in catalog order, then seq
  std::vector<safety::SafetyEvent> safety_log;
  std::vector<factory::ProductTimeline> products;
  std::vector<compliance::StreamMetrics> metrics;
  compliance::StreamMetrics aggregate;
  compliance::ComplianceReport compliance;
  std::vector<std::string> invariant_violations;
  int watchdog_trips = 0;

  std::size_t products_completed() const {
    return static_cast<std::size_t>(
        std::count_if(products.begin(), products.end(), [](const auto& p) { return p.completed_at.has_value(); }));
  }
};

class Simulation {
 public:
  explicit Simulation(Scenario scenario) : scenario_(std::move(scenario)), model_(scenario_.link_model()) {
    scenario_.validate();
    channel_.endpoint_a = scenario_.safety.endpoint_a;
    channel_.endpoint_b = scenario_.safety.endpoint_b;
    channel_.watchdog = scenario_.safety.watchdog;
  }

  RunResult run() {
    line_ = std::make_unique<factory::ProductionLine>(engine_, scenario_.factory, safety_, model_, scenario_.link,
                                                      scenario_.seed);
    line_->set_on_docked([this] { channel_.reset(); });
    setup_traffic();
    channel_.validate();
    line_->start();
    setup_script();
    const SimTime end{scenario_.horizon};
    engine_.run_until(end);
    return collect(end);
  }

  const factory::ProductionLine& line() const { return *line_; }

 private:
  struct StreamState {
    StreamInfo info;
    traffic::PacketGenerator gen;
    link::WirelessChannel channel;
    std::vector<traffic::PacketRecord> records;
  };

  void setup_traffic() {
    const auto catalog = scenario_.traffic.catalog();
    for (const auto& p : catalog) {
      StreamInfo info{p, std::nullopt};
      if (p.cls == traffic::StreamClass::SafetyRelevant) {
        if (p.source == channel_.endpoint_a && p.destination == channel_.endpoint_b) {
          info.safety_direction = safety::Direction::AToB;
          channel_.pdu_size_a_to_b = p.payload_bytes;
          channel_.cycle = p.period();
        } else if (p.source == channel_.endpoint_b && p.destination == channel_.endpoint_a) {
          info.safety_direction = safety::Direction::BToA;
          channel_.pdu_size_b_to_a = p.payload_bytes;
        }
      }
      streams_.push_back(std::make_unique<StreamState>(StreamState{
          info, traffic::PacketGenerator{p, RngStream{scenario_.seed, "traffic/" + p.name}},
          link::WirelessChannel{model_, scenario_.link, RngStream{scenario_.seed, "link/" + p.name}, scenario_.outages},
          {}}));
    }
    for (std::size_t i = 0; i < streams_.size(); ++i) schedule_next(i);
  }

  Duration retry_window(const StreamState& s) const {
    if (s.info.profile.cls != traffic::StreamClass::SafetyRelevant) return Duration::zero();
    return scenario_.safety.retry_window.value_or(s.info.profile.period());
  }

  void schedule_next(std::size_t i) {
    auto& s = *streams_[i];
    const auto t = s.gen.next(SimTime{scenario_.horizon});
    if (!t) return;
    engine_.schedule(*t, "traffic", [this, i] { emit(i); });
  }

  void emit(std::size_t i) {
    auto& s = *streams_[i];
    traffic::PacketRecord r;
    r.stream = s.info.profile.name;
    r.seq = static_cast<std::int64_t>(s.records.size());
    r.cls = s.info.profile.cls;
    r.size_bytes = s.info.profile.payload_bytes;
    r.created_at = engine_.now();
    const auto tx = link::transmit(model_, scenario_.link, r.created_at, r.size_bytes, retry_window(s),
                                   [&s](SimTime at) { return s.channel.attempt(at); });
    r.sent_at = tx.sent_at;
    r.attempts = tx.attempts;
    const std::size_t idx = s.records.size();
    s.records.push_back(r);
    const auto lane = s.info.safety_direction ? Lane::Safety : Lane::Normal;
    engine_.schedule(tx.resolved_at, s.info.safety_direction ? "safety" : "link",
                     [this, i, idx, tx] { resolve(i, idx, tx); }, lane);
    schedule_next(i);
  }

  void resolve(std::size_t i, std::size_t idx, const link::Transmission& tx) {
    auto& s = *streams_[i];
    auto& r = s.records[idx];
    r.delivered_at = tx.delivered_at;
    r.resolved_at = tx.resolved_at;
    r.status = tx.delivered_at ? traffic::PacketRecord::Status::Delivered : traffic::PacketRecord::Status::Lost;
    if (!s.info.safety_direction) return;
    const auto& robot = line_->robot().id;
    const auto loop = safety_.membership(robot);
    if (!loop) return;  // supervision runs only while the robot is in a loop
    const int before = channel_.missed(*s.info.safety_direction);
    if (channel_.record(*s.info.safety_direction, tx.delivered_at.has_value())) {
      ++watchdog_trips_;
      safety_.watchdog_trip(engine_.now(), *loop, robot, before + 1);
    }
  }

  void setup_script() {
    for (const auto& a : scenario_.script) {
      const bool safety_action = a.kind != ScriptAction::Kind::Fault && a.kind != ScriptAction::Kind::Repair &&
                                 a.kind != ScriptAction::Kind::OutOfService;
      engine_.schedule(SimTime{a.at}, "script", [this, a] { apply(a); }, safety_action ? Lane::Safety : Lane::Normal);
    }
  }

  void apply(const ScriptAction& a) {
    const SimTime now = engine_.now();
    switch (a.kind) {
      case ScriptAction::Kind::Estop: safety_.estop(now, a.target); break;
      case ScriptAction::Kind::Reset:
        if (safety_.reset_loop(now, a.target) && safety_.membership(line_->robot().id) == a.target) channel_.reset();
        break;
      case ScriptAction::Kind::Obstacle: {
        const auto sensor = safety::parse_sensor(a.sensor);
        const std::string robot = a.target.empty() ? line_->robot().id : a.target;
        safety_.local_guard(now, robot, sensor, true);
        if (sensor != safety::Sensor::Bumper) {
          engine_.schedule_in(a.duration, "script", [this, robot, sensor] {
            safety_.local_guard(engine_.now(), robot, sensor, false);
          }, Lane::Safety);
        }
        break;
      }
      case ScriptAction::Kind::RobotReset:
        safety_.reset_robot(now, a.target.empty() ? line_->robot().id : a.target);
        break;
      case ScriptAction::Kind::Fault: line_->set_fault(a.target, true); break;
      case ScriptAction::Kind::Repair: line_->set_fault(a.target, false); break;
      case ScriptAction::Kind::OutOfService: line_->set_out_of_service(a.target); break;
    }
  }

  RunResult collect(SimTime end) {
    RunResult out;
    out.scenario = scenario_;
    out.summary = engine_.summary();
    compliance::MetricsOptions opt;
    opt.observation_end = end;
    opt.jitter = scenario_.jitter;
    for (auto& s : streams_) {
      out.streams.push_back(s->info);
      out.metrics.push_back(compliance::compute_metrics(s->info.profile.name, s->info.profile.cls, s->records, opt));
      out.packets.insert(out.packets.end(), s->records.begin(), s->records.end());
    }
    out.aggregate = compliance::compute_metrics(std::string(compliance::kAggregate), std::nullopt, out.packets, opt);
    out.compliance = compliance::assess(out.metrics, out.aggregate, scenario_.service_area, scenario_.jitter);
    out.safety_log = safety_.log();
    out.products = line_->timelines();
    out.invariant_violations = line_->invariant_violations();
    out.watchdog_trips = watchdog_trips_;
    return out;
  }

  Scenario scenario_;
  link::LinkModel model_;
  Engine engine_;
  safety::SafetySystem safety_;
  safety::SafetyChannel channel_;
  std::unique_ptr<factory::ProductionLine> line_;
  std::vector<std::unique_ptr<StreamState>> streams_;
  int watchdog_trips_ = 0;
};

inline RunResult run_scenario(Scenario s) { return Simulation{std::move(s)}.run(); }

}  // namespace fabsim
