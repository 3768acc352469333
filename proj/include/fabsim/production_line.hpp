#pragma once

// Event-driven production line: product release, conveyor transfers granted
// by the central handshake controller, module processing, the transport
// robot with docking and in-transit inspection, and the manual station.
// Everything runs inside the engine's single event loop; the controller
// serializes grants globally.

#include <algorithm>
#include <cstdio>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fabsim/factory.hpp"
#include "fabsim/radio_link.hpp"
#include "fabsim/safety.hpp"
#include "fabsim/sim_core.hpp"

namespace fabsim::factory {

struct ModuleSpec {
  std::string name;
  StepId capability;
  Duration service_time{};
  friend bool operator==(const ModuleSpec&, const ModuleSpec&) = default;
};

struct IslandSpec {
  std::string id;
  std::string color;
  std::vector<ModuleSpec> modules;
  friend bool operator==(const IslandSpec&, const IslandSpec&) = default;
};

struct ManualStationSpec {
  bool enabled = true;
  Duration service_time = 20s;
  Duration rework_time = 15s;
  friend bool operator==(const ManualStationSpec&, const ManualStationSpec&) = default;
};

struct ReleaseSpec {
  int count = 3;
  Duration first_at = 1s;
  Duration interval = 15s;
  std::string island = "island1";
  friend bool operator==(const ReleaseSpec&, const ReleaseSpec&) = default;
};

struct FactoryConfig {
  std::vector<StepId> recipe;
  std::vector<IslandSpec> islands;
  ManualStationSpec manual;
  Duration transfer_time = 1s;
  TransitMatrix transit;
  ReleaseSpec release;
  InspectionSettings inspection;
  Duration registry_period = 500ms;
  int staleness_factor = 3;
  bool divert_busy_to_manual = true;
  std::string robot_id = "robot";
  std::string robot_home;  // island id; first island when empty

  friend bool operator==(const FactoryConfig&, const FactoryConfig&) = default;

  // Three islands with overlapping capabilities; optical inspection exists
  // only on island3 so every product needs at least one robot leg.
  static FactoryConfig defaults() {
    FactoryConfig c;
    c.recipe = {"engrave", "insert_spring", "mount_cover", "weigh", "optical_inspection"};
    c.islands = {
        {"island1", "red", {{"engrave", "engrave", 4s}, {"spring", "insert_spring", 3s}, {"cover", "mount_cover", 4s}}},
        {"island2", "green", {{"spring", "insert_spring", 3s}, {"cover", "mount_cover", 4s}, {"scale", "weigh", 2s}}},
        {"island3", "blue", {{"engrave", "engrave", 4s}, {"scale", "weigh", 2s}, {"optical", "optical_inspection", 3s}}},
    };
    c.manual = {true, 30s, 20s};
    c.transfer_time = 2s;
    c.transit.set("island1", "island2", 8s);
    c.transit.set("island2", "island3", 8s);
    c.transit.set("island1", "island3", 12s);
    c.transit.set("island1", std::string(kManualStation), 10s);
    c.transit.set("island2", std::string(kManualStation), 6s);
    c.transit.set("island3", std::string(kManualStation), 10s);
    c.release = {4, 1s, 20s, "island1"};
    c.inspection.defect_probability = 0.05;
    return c;
  }

  Duration staleness_bound() const { return registry_period * staleness_factor; }

  void validate() const {
    if (recipe.empty()) throw InvalidArgument("recipe must not be empty");
    if (islands.empty()) throw InvalidArgument("at least one island is required");
    std::set<std::string> ids;
    for (const auto& i : islands) {
      if (i.id.empty() || i.id == kManualStation) throw InvalidArgument("invalid island id '" + i.id + "'");
      if (!ids.insert(i.id).second) throw InvalidArgument("duplicate island " + i.id);
      std::set<std::string> names;
      for (const auto& m : i.modules) {
        if (!names.insert(m.name).second) throw InvalidArgument("duplicate module " + i.id + "." + m.name);
        if (m.service_time < Duration::zero()) throw InvalidArgument("negative service time on " + i.id + "." + m.name);
      }
    }
    auto known = [&](const std::string& loc) { return ids.count(loc) > 0 || (manual.enabled && loc == kManualStation); };
    for (const auto& a : ids) {
      for (const auto& b : ids) {
        if (!transit.has(a, b)) throw InvalidArgument("transit matrix lacks " + a + " <-> " + b);
      }
      if (manual.enabled && !transit.has(a, std::string(kManualStation))) {
        throw InvalidArgument("transit matrix lacks " + a + " <-> manual");
      }
    }
    for (const auto& [k, d] : transit.entries()) {
      if (!known(k.first) || !known(k.second)) {
        throw InvalidArgument("transit entry references unknown location " + k.first + " / " + k.second);
      }
    }
    if (release.count < 0) throw InvalidArgument("release count must be non-negative");
    if (release.count > 0 && !ids.count(release.island)) throw InvalidArgument("unknown release island " + release.island);
    if (release.interval < Duration::zero() || release.first_at < Duration::zero()) {
      throw InvalidArgument("release times must be non-negative");
    }
    if (!robot_home.empty() && !ids.count(robot_home)) throw InvalidArgument("unknown robot home " + robot_home);
    if (transfer_time < Duration::zero()) throw InvalidArgument("transfer time must be non-negative");
    if (registry_period <= Duration::zero() || staleness_factor < 1) throw InvalidArgument("invalid registry cadence");
    if (inspection.defect_probability < 0.0 || inspection.defect_probability > 1.0) {
      throw InvalidArgument("defect probability must lie in [0, 1]");
    }
    if (inspection.image_bytes <= 0 || inspection.verdict_bytes <= 0) throw InvalidArgument("inspection sizes must be positive");
  }
};

// Per-product completion bound for an otherwise idle line without faults or
// defects: each step costs at most a repositioning and a loaded transit, two
// conveyor transfers and the slowest service (manual station included).
inline Duration completion_bound(const FactoryConfig& c) {
  Duration max_service{};
  for (const auto& i : c.islands) {
    for (const auto& m : i.modules) max_service = std::max(max_service, m.service_time);
  }
  if (c.manual.enabled) max_service = std::max(max_service, c.manual.service_time + c.manual.rework_time);
  const Duration per_step = max_service + 2 * c.transit.max() + 2 * c.transfer_time;
  return per_step * static_cast<std::int64_t>(c.recipe.size());
}

struct ProductLeg {
  enum class Kind { Conveyor, Robot };
  Kind kind = Kind::Conveyor;
  std::string from;  // endpoint
  std::string to;    // endpoint ("manual" for the manual station)
  SimTime start{};
  SimTime end{};
  std::vector<std::string> via;  // locations passed without unloading
};

struct ProductTimeline {
  Product product;
  SimTime released_at{};
  std::optional<SimTime> completed_at;
  std::vector<ProductLeg> legs;
  std::vector<InspectionOutcome> inspections;
};

class ProductionLine {
 public:
  ProductionLine(Engine& engine, FactoryConfig config, safety::SafetySystem& safety, const link::LinkModel& model,
                 link::LinkConfig link, std::uint64_t seed)
      : engine_(engine),
        config_(std::move(config)),
        safety_(safety),
        model_(model),
        link_(std::move(link)),
        inspection_rng_(seed, "inspection"),
        registry_(config_.staleness_bound()) {
    config_.validate();
    for (const auto& spec : config_.islands) {
      Island island;
      island.id = spec.id;
      island.color = spec.color;
      island.safety_loop_id = spec.id;
      island.dock = DockingStation{spec.id + ".dock", spec.id, false, GateState::Closed};
      safety::SafetyLoop loop{spec.id, spec.id, {}, safety::LoopState::Running};
      loop.members.insert(island.dock.id);
      for (const auto& m : spec.modules) {
        StationModule sm;
        sm.id = spec.id + "." + m.name;
        sm.island_id = spec.id;
        sm.capability = m.capability;
        sm.service_time = m.service_time;
        loop.members.insert(sm.id);
        island.modules.push_back(sm);
        runtime_.emplace(sm.id, std::make_unique<ModuleRuntime>());
      }
      infeed_.emplace(spec.id, std::deque<std::size_t>{});
      islands_.push_back(std::move(island));
      safety_.add_loop(std::move(loop));
    }
    robot_.id = config_.robot_id;
    safety_.add_robot(robot_.id);
    safety_.on_loop_transition([this](const safety::LoopTransition&) { on_safety_change(); });
    safety_.on_local_transition([this](const std::string& robot, safety::LocalState, safety::LocalState to) {
      if (robot == robot_.id) robot_.local_safety = to;
      on_safety_change();
    });
  }

  ProductionLine(const ProductionLine&) = delete;
  ProductionLine& operator=(const ProductionLine&) = delete;

  void start() {
    const std::string home = config_.robot_home.empty() ? islands_.front().id : config_.robot_home;
    robot_.pose = RobotPose{PoseKind::InTransit, {}, home, home};
    const auto r = dock(robot_, island(home), safety_, engine_.now());
    if (!r.docked) throw InvalidArgument("robot cannot dock at home island: " + r.reason);
    publish_all(true);
    for (int i = 0; i < config_.release.count; ++i) {
      const SimTime at = SimTime{config_.release.first_at + config_.release.interval * i};
      engine_.schedule(at, "factory", [this, i] { release(i); });
    }
    schedule_publish();
  }

  // Scripted module faults.
  void set_fault(const std::string& module, bool fault) {
    auto& rt = module_runtime(module);
    rt.fault = fault;
    if (!fault) rt.out_of_service = false;
    refresh_module(module);
    refresh_pauses();
    request_tick();
  }

  void set_out_of_service(const std::string& module) {
    module_runtime(module).out_of_service = true;
    refresh_module(module);
    refresh_pauses();
    request_tick();
  }

  const std::vector<Island>& islands() const { return islands_; }
  const Robot& robot() const { return robot_; }
  const StateRegistry& registry() const { return registry_; }
  const FactoryConfig& config() const { return config_; }
  std::vector<ProductTimeline> timelines() const {
    std::vector<ProductTimeline> out;
    out.reserve(products_.size());
    for (const auto& p : products_) out.push_back(p->timeline);
    return out;
  }

  // Occupancy and membership checks that must hold after every event.
  std::vector<std::string> invariant_violations() const { return violations_; }

  RoutingContext routing_context() const {
    RoutingContext ctx;
    ctx.islands = islands_;
    ctx.transit = &config_.transit;
    ctx.manual_station = config_.manual.enabled;
    ctx.divert_busy_to_manual = config_.divert_busy_to_manual;
    for (const auto& i : islands_) ctx.loop_states[i.id] = safety_.loop(i.safety_loop_id).state;
    return ctx;
  }

 private:
  enum class Where { Infeed, Module, Conveyor, Robot, Manual, Done };
  enum class RobotPhase { Idle, Repositioning, Loading, Carrying, Arrived, Unloading };

  struct ProductState {
    ProductTimeline timeline;
    Where where = Where::Infeed;
    std::string island;    // island of the current position (empty at manual)
    std::string endpoint;  // current holding endpoint
    bool ready = false;    // waiting for its next move
    PausableTimer transfer;
    std::string transfer_island;
    bool transfer_uses_robot = false;
    std::optional<ProductLeg> open_leg;
    std::string open_leg_origin;

    Product& product() { return timeline.product; }
  };

  struct ModuleRuntime {
    std::optional<std::size_t> occupant;
    bool fault = false;
    bool out_of_service = false;
    PausableTimer timer;
  };

  // ---- lookup ----

  Island& island(const std::string& id) {
    for (auto& i : islands_) {
      if (i.id == id) return i;
    }
    throw UnknownEndpoint("unknown island " + id);
  }

  StationModule& module(const std::string& id) {
    for (auto& i : islands_) {
      for (auto& m : i.modules) {
        if (m.id == id) return m;
      }
    }
    throw UnknownEndpoint("unknown module " + id);
  }

  ModuleRuntime& module_runtime(const std::string& id) {
    auto it = runtime_.find(id);
    if (it == runtime_.end()) throw UnknownEndpoint("unknown module " + id);
    return *it->second;
  }

  bool island_running(const std::string& id) const {
    return id.empty() || safety_.loop(id).state == safety::LoopState::Running;
  }

  std::string location_of(const ProductState& p) const {
    return p.where == Where::Manual ? std::string(kManualStation) : p.island;
  }

  // ---- registry ----

  void refresh_module(const std::string& id) {
    auto& m = module(id);
    const auto& rt = module_runtime(id);
    if (rt.fault) {
      m.state = ModuleState::Fault;
    } else if (rt.out_of_service) {
      m.state = ModuleState::OutOfService;
    } else {
      m.state = rt.occupant ? ModuleState::Busy : ModuleState::Idle;
    }
    publish_module(m, true);
  }

  void publish_module(const StationModule& m, bool on_change) {
    const auto& rt = module_runtime(m.id);
    if (rt.out_of_service && !on_change) return;  // silent endpoint goes stale
    RegistryRecord r;
    r.kind = RegistryRecord::Kind::Module;
    r.endpoint = m.id;
    r.island_id = m.island_id;
    r.capability = m.capability;
    r.state = m.state;
    r.upstream = m.upstream;
    r.updated_at = engine_.now();
    registry_.publish(std::move(r));
  }

  void publish_dock(const Island& i) {
    RegistryRecord r;
    r.kind = RegistryRecord::Kind::Dock;
    r.endpoint = i.dock.id;
    r.island_id = i.id;
    r.robot_docked = i.dock.robot_docked;
    r.carrier_present = i.dock.robot_docked && (robot_.carrier.has_value() || robot_phase_ == RobotPhase::Loading);
    r.upstream = i.dock.gate;
    r.updated_at = engine_.now();
    registry_.publish(std::move(r));
  }

  void publish_manual() {
    if (!config_.manual.enabled) return;
    RegistryRecord r;
    r.kind = RegistryRecord::Kind::Manual;
    r.endpoint = std::string(kManualStation);
    r.state = manual_working_ ? ModuleState::Busy : ModuleState::Idle;
    r.updated_at = engine_.now();
    registry_.publish(std::move(r));
  }

  void publish_all(bool on_change) {
    for (const auto& i : islands_) {
      for (const auto& m : i.modules) publish_module(m, on_change);
      publish_dock(i);
    }
    publish_manual();
  }

  void schedule_publish() {
    engine_.schedule_in(config_.registry_period, "factory", [this] {
      publish_all(false);
      schedule_publish();
    });
  }

  // ---- control loop ----

  void request_tick() {
    if (tick_pending_) return;
    tick_pending_ = true;
    engine_.schedule(engine_.now(), "factory", [this] {
      tick_pending_ = false;
      tick();
      check_invariants();
    });
  }

  void tick() {
    route_products();
    drive_robot();
  }

  void release(int i) {
    auto ps = std::make_unique<ProductState>();
    char tag[16];
    std::snprintf(tag, sizeof tag, "tag-%04d", i + 1);
    ps->timeline.product.id = tag;
    ps->timeline.product.order_config = config_.recipe;
    ps->timeline.released_at = engine_.now();
    ps->where = Where::Infeed;
    ps->island = config_.release.island;
    ps->endpoint = config_.release.island + ".infeed";
    ps->ready = true;
    const std::size_t idx = products_.size();
    products_.push_back(std::move(ps));
    infeed_[config_.release.island].push_back(idx);
    request_tick();
  }

  std::optional<RoutePlan> plan_for(ProductState& p, const std::string& location) {
    try {
      return plan_route(p.product(), location, routing_context(), robot_);
    } catch (const NoRouteAvailable&) {
      return std::nullopt;  // stays put until the line changes
    }
  }

  void dequeue_robot(std::size_t idx) {
    robot_queue_.erase(std::remove(robot_queue_.begin(), robot_queue_.end(), idx), robot_queue_.end());
  }

  void route_products() {
    for (std::size_t idx = 0; idx < products_.size(); ++idx) {
      auto& p = *products_[idx];
      if (!p.ready || p.where == Where::Robot || p.where == Where::Done) continue;
      if (robot_job_ == idx && robot_phase_ == RobotPhase::Loading) continue;
      if (p.where == Where::Infeed && infeed_[p.island].front() != idx) continue;
      if (!island_running(p.island) && p.where != Where::Manual) continue;
      const std::string location = location_of(p);
      const auto plan = plan_for(p, location);
      if (!plan || plan->target == RoutePlan::Target::Wait) {
        if (robot_job_ != idx) dequeue_robot(idx);
        continue;
      }
      if (plan->loaded_legs() == 0) {
        if (robot_job_ == idx) continue;  // robot already on its way; re-decided at pickup
        dequeue_robot(idx);
        if (plan->target == RoutePlan::Target::Module) {
          if (handshake_grant(registry_, engine_.now(), p.product(), p.endpoint, plan->module_id).granted) {
            start_conveyor(idx, plan->module_id);
          }
        } else {
          enqueue_manual(idx);
        }
        continue;
      }
      if (std::find(robot_queue_.begin(), robot_queue_.end(), idx) == robot_queue_.end() && robot_job_ != idx) {
        robot_queue_.push_back(idx);
      }
    }
  }

  // ---- conveyor transfers and processing ----

  void start_conveyor(std::size_t idx, const std::string& to_module) {
    auto& p = *products_[idx];
    auto& target = module(to_module);
    open_source_gate(p);
    target.upstream = GateState::Open;
    publish_module(target, true);
    ProductLeg leg{ProductLeg::Kind::Conveyor, p.endpoint, to_module, engine_.now(), {}, {}};
    if (p.where == Where::Infeed) infeed_[p.island].pop_front();
    const std::string from_endpoint = p.endpoint;
    const Where from_where = p.where;
    p.where = Where::Conveyor;
    p.ready = false;
    p.transfer_island = target.island_id;
    p.transfer_uses_robot = false;
    p.transfer.start(engine_, config_.transfer_time, "factory", [this, idx, leg, from_endpoint, from_where, to_module]() mutable {
      auto& p = *products_[idx];
      if (from_where == Where::Module) vacate_module(from_endpoint);
      auto& target = module(to_module);
      target.upstream = GateState::Closed;
      leg.end = engine_.now();
      p.timeline.legs.push_back(leg);
      occupy_module(idx, to_module);
      request_tick();
    });
    refresh_pauses();
  }

  void open_source_gate(ProductState& p) {
    if (p.where == Where::Module) {
      auto& m = module(p.endpoint);
      m.downstream = GateState::Open;
      publish_module(m, true);
    }
  }

  void vacate_module(const std::string& id) {
    auto& m = module(id);
    m.downstream = GateState::Closed;
    module_runtime(id).occupant.reset();
    refresh_module(id);
  }

  void occupy_module(std::size_t idx, const std::string& id) {
    auto& rt = module_runtime(id);
    if (rt.occupant) violations_.push_back("module " + id + " received a second carrier");
    rt.occupant = idx;
    auto& p = *products_[idx];
    p.where = Where::Module;
    p.endpoint = id;
    p.island = module(id).island_id;
    p.ready = false;
    refresh_module(id);
    const auto& m = module(id);
    rt.timer.start(engine_, m.service_time, "factory", [this, idx, id] { finish_processing(idx, id); });
    refresh_pauses();
  }

  void finish_processing(std::size_t idx, const std::string& id) {
    auto& p = *products_[idx];
    const auto& m = module(id);
    p.product().complete_step(m.capability, id, engine_.now());
    if (p.product().complete()) {
      complete(idx);
      module_runtime(id).occupant.reset();
      refresh_module(id);
    } else {
      p.ready = true;
    }
    request_tick();
  }

  void complete(std::size_t idx) {
    auto& p = *products_[idx];
    p.where = Where::Done;
    p.ready = false;
    p.timeline.completed_at = engine_.now();
  }

  // ---- manual station ----

  void enqueue_manual(std::size_t idx) {
    auto& p = *products_[idx];
    p.ready = false;
    manual_queue_.push_back(idx);
    start_manual_if_idle();
  }

  void start_manual_if_idle() {
    if (manual_working_ || manual_queue_.empty()) return;
    const std::size_t idx = manual_queue_.front();
    manual_queue_.pop_front();
    auto& p = *products_[idx];
    Duration work = p.product().next_step() ? config_.manual.service_time : Duration::zero();
    const bool rework = p.product().memory.latest_failed();
    if (rework) work += config_.manual.rework_time;
    manual_working_ = true;
    publish_manual();
    manual_timer_.start(engine_, work, "factory", [this, idx, rework] {
      auto& p = *products_[idx];
      if (rework) {
        const auto* flag = p.product().memory.latest_flag();
        p.product().memory.append(QualityFlag{flag->step, Verdict::Pass, engine_.now(), false, true});
      }
      if (auto next = p.product().next_step()) p.product().complete_step(*next, std::string(kManualStation), engine_.now());
      manual_working_ = false;
      publish_manual();
      if (p.product().complete()) {
        complete(idx);
      } else {
        p.ready = true;
      }
      start_manual_if_idle();
      request_tick();
    });
  }

  // ---- robot ----

  void drive_robot() {
    switch (robot_phase_) {
      case RobotPhase::Idle: dispatch(); break;
      case RobotPhase::Arrived: decide_at_stop(); break;
      default: break;
    }
  }

  bool robot_halted() const {
    if (robot_.local_safety != safety::LocalState::Clear) return true;
    return robot_.pose.kind == PoseKind::AtDock && !island_running(robot_.pose.island);
  }

  void dispatch() {
    if (robot_halted()) return;
    for (std::size_t idx : robot_queue_) {
      auto& p = *products_[idx];
      if (!p.ready) continue;
      if (p.where != Where::Manual && !island_running(p.island)) continue;
      const std::string pickup = location_of(p);
      robot_job_ = idx;
      dequeue_robot(idx);
      if (robot_at(pickup)) {
        robot_phase_ = RobotPhase::Arrived;
        decide_at_stop();
      } else {
        robot_phase_ = RobotPhase::Repositioning;
        start_transit(pickup);
      }
      return;
    }
  }

  bool robot_at(const std::string& location) const {
    if (location == kManualStation) return robot_.pose.kind == PoseKind::AtManualStation;
    return (robot_.pose.kind == PoseKind::AtDock && robot_.pose.island == location) ||
           (robot_.pose.kind == PoseKind::InTransit && robot_.pose.to == location && robot_phase_ == RobotPhase::Arrived);
  }

  // Robot stopped at a location, either to pick up its job or carrying it.
  void decide_at_stop() {
    if (robot_halted()) return;
    const std::string here = robot_.pose.location();
    if (!robot_.carrier) {
      if (!robot_job_) {
        robot_phase_ = RobotPhase::Idle;
        dispatch();
        return;
      }
      auto& p = *products_[*robot_job_];
      if (!p.ready || location_of(p) != here) {  // product moved on without the robot
        robot_job_.reset();
        robot_phase_ = RobotPhase::Idle;
        request_tick();
        return;
      }
      begin_loading(*robot_job_);
      return;
    }
    const std::size_t idx = *robot_job_;
    auto& p = *products_[idx];
    const auto plan = plan_for(p, here);
    if (!plan || plan->target == RoutePlan::Target::Wait) {
      ensure_docked(here);
      return;
    }
    if (plan->loaded_legs() > 0) {
      const std::string dest = plan->legs.back().to;
      if (robot_.pose.kind == PoseKind::AtDock && !island_running(robot_.pose.island)) return;
      if (p.open_leg && here != p.open_leg_origin) p.open_leg->via.push_back(here);
      depart_loaded(idx, dest);
      return;
    }
    if (plan->target == RoutePlan::Target::ManualStation) {
      begin_unloading(idx, std::string(kManualStation));
      return;
    }
    if (!ensure_docked(here)) return;
    if (handshake_grant(registry_, engine_.now(), p.product(), island(here).dock.id, plan->module_id).granted) {
      begin_unloading(idx, plan->module_id);
    }
  }

  bool ensure_docked(const std::string& here) {
    if (here == kManualStation) return true;
    if (robot_.pose.kind == PoseKind::AtDock) return true;
    const auto r = dock(robot_, island(here), safety_, engine_.now());
    if (r.docked) {
      publish_dock(island(here));
      on_docked();
    }
    return r.docked;
  }

  void begin_loading(std::size_t idx) {
    auto& p = *products_[idx];
    const std::string here = location_of(p);
    if (here != kManualStation) {
      if (!ensure_docked(here)) return;
      auto& isl = island(here);
      if (!handshake_grant(registry_, engine_.now(), p.product(), p.endpoint, isl.dock.id).granted) return;
      isl.dock.gate = GateState::Open;
      open_source_gate(p);
      if (p.where == Where::Infeed) infeed_[p.island].pop_front();
    }
    robot_phase_ = RobotPhase::Loading;
    if (here != kManualStation) publish_dock(island(here));
    p.ready = false;
    p.open_leg = ProductLeg{ProductLeg::Kind::Robot, p.endpoint, {}, engine_.now(), {}, {}};
    p.open_leg_origin = here;
    const Where from_where = p.where;
    const std::string from_endpoint = p.endpoint;
    p.where = Where::Conveyor;
    p.transfer_island = here == kManualStation ? std::string{} : here;
    p.transfer_uses_robot = true;
    p.transfer.start(engine_, config_.transfer_time, "factory", [this, idx, from_where, from_endpoint, here] {
      auto& p = *products_[idx];
      if (from_where == Where::Module) vacate_module(from_endpoint);
      robot_.carrier = p.product().id;
      p.where = Where::Robot;
      p.endpoint = robot_.id;
      inspect_pending_ = true;
      if (here != kManualStation) {
        auto& isl = island(here);
        isl.dock.gate = GateState::Closed;
        publish_dock(isl);
      }
      robot_phase_ = RobotPhase::Arrived;
      request_tick();
    });
    refresh_pauses();
  }

  void depart_loaded(std::size_t idx, const std::string& dest) {
    auto& p = *products_[idx];
    const std::string here = robot_.pose.location();
    const Duration transit = config_.transit.between(here, dest);
    robot_phase_ = RobotPhase::Carrying;
    start_transit(dest);
    if (inspect_pending_) {
      inspect_pending_ = false;
      if (!p.product().memory.completed_steps().empty()) {
        p.timeline.inspections.push_back(inspect_in_transit(robot_, p.product(), model_, link_, config_.inspection,
                                                            engine_.now(), transit, inspection_rng_));
      }
    }
  }

  void start_transit(const std::string& dest) {
    const std::string here = robot_.pose.location();
    if (robot_.pose.kind == PoseKind::AtDock) {
      auto& isl = island(here);
      undock(robot_, isl, safety_, engine_.now(), dest);
      publish_dock(isl);
    } else {
      robot_.pose = RobotPose{PoseKind::InTransit, {}, here, dest};
    }
    transit_.start(engine_, config_.transit.between(here, dest), "factory", [this, dest] { arrive(dest); });
    refresh_pauses();
  }

  void arrive(const std::string& dest) {
    if (dest == kManualStation) {
      robot_.pose = RobotPose{PoseKind::AtManualStation, {}, {}, {}};
    }
    robot_phase_ = RobotPhase::Arrived;
    request_tick();
  }

  void begin_unloading(std::size_t idx, const std::string& target) {
    auto& p = *products_[idx];
    const std::string here = robot_.pose.location();
    robot_phase_ = RobotPhase::Unloading;
    if (target != kManualStation) {
      auto& isl = island(here);
      isl.dock.gate = GateState::Open;
      publish_dock(isl);
      auto& m = module(target);
      m.upstream = GateState::Open;
      publish_module(m, true);
    }
    p.transfer_island = target == kManualStation ? std::string{} : here;
    p.transfer_uses_robot = true;
    p.transfer.start(engine_, config_.transfer_time, "factory", [this, idx, target, here] {
      auto& p = *products_[idx];
      robot_.carrier.reset();
      robot_job_.reset();
      robot_phase_ = RobotPhase::Idle;
      if (p.open_leg) {
        p.open_leg->to = target;
        p.open_leg->end = engine_.now();
        p.timeline.legs.push_back(*p.open_leg);
        p.open_leg.reset();
      }
      if (target == kManualStation) {
        p.where = Where::Manual;
        p.island.clear();
        p.endpoint = std::string(kManualStation);
        enqueue_manual(idx);
      } else {
        auto& isl = island(here);
        isl.dock.gate = GateState::Closed;
        publish_dock(isl);
        module(target).upstream = GateState::Closed;
        occupy_module(idx, target);
      }
      request_tick();
    });
    refresh_pauses();
  }

  void on_docked() {
    if (on_docked_) on_docked_();
  }

 public:
  // Hook for the safety channel supervisor (membership changed to a loop).
  void set_on_docked(std::function<void()> f) { on_docked_ = std::move(f); }

 private:
  // ---- safety coupling ----

  void on_safety_change() {
    refresh_pauses();
    request_tick();
  }

  void refresh_pauses() {
    for (auto& i : islands_) {
      const bool stopped = !island_running(i.id);
      for (auto& m : i.modules) {
        auto& rt = module_runtime(m.id);
        if (stopped || rt.fault) {
          rt.timer.pause();
        } else {
          rt.timer.resume();
        }
      }
    }
    const bool robot_clear = robot_.local_safety == safety::LocalState::Clear;
    for (auto& p : products_) {
      const bool hold = !island_running(p->transfer_island) || (p->transfer_uses_robot && !robot_clear);
      if (hold) {
        p->transfer.pause();
      } else {
        p->transfer.resume();
      }
    }
    if (robot_clear) {
      transit_.resume();
    } else {
      transit_.pause();
    }
  }

  void check_invariants() {
    const bool docked = robot_.pose.kind == PoseKind::AtDock;
    if (docked != robot_.safety_membership.has_value()) {
      violations_.push_back("robot membership does not match its pose at " + std::to_string(to_ns(engine_.now())));
    }
    if (docked && safety_.membership(robot_.id) != robot_.pose.island) {
      violations_.push_back("robot is in the wrong safety loop at " + std::to_string(to_ns(engine_.now())));
    }
    int docked_count = 0;
    for (const auto& i : islands_) docked_count += i.dock.robot_docked;
    if (docked_count > 1) violations_.push_back("more than one dock reports a docked robot");
  }

  Engine& engine_;
  FactoryConfig config_;
  safety::SafetySystem& safety_;
  const link::LinkModel& model_;
  link::LinkConfig link_;
  RngStream inspection_rng_;
  StateRegistry registry_;

  std::vector<Island> islands_;
  std::map<std::string, std::unique_ptr<ModuleRuntime>> runtime_;
  std::map<std::string, std::deque<std::size_t>> infeed_;
  std::vector<std::unique_ptr<ProductState>> products_;

  Robot robot_;
  RobotPhase robot_phase_ = RobotPhase::Idle;
  std::optional<std::size_t> robot_job_;
  std::deque<std::size_t> robot_queue_;
  PausableTimer transit_;
  bool inspect_pending_ = false;

  std::deque<std::size_t> manual_queue_;
  bool manual_working_ = false;
  PausableTimer manual_timer_;

  bool tick_pending_ = false;
  std::function<void()> on_docked_;
  std::vector<std::string> violations_;
};

}  // namespace fabsim::factory
