#pragma once

// Production-flow model: product digital twin, station modules and islands,
// the state registry read by the handshake controller, route planning,
// in-transit inspection and docking.

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fabsim/errors.hpp"
#include "fabsim/radio_link.hpp"
#include "fabsim/safety.hpp"
#include "fabsim/sim_core.hpp"

namespace fabsim::factory {

using namespace std::chrono_literals;

using StepId = std::string;

inline constexpr std::string_view kManualStation = "manual";

enum class Verdict { Pass, Fail };

inline std::string_view to_string(Verdict v) { return v == Verdict::Pass ? "Pass" : "Fail"; }

struct StepCompletion {
  StepId step;
  std::string station;
  SimTime at;
};

struct QualityFlag {
  StepId step;
  Verdict verdict = Verdict::Pass;
  SimTime at;
  bool timeout = false;  // verdict defaulted because the cloud answer came too late
  bool rework = false;   // written by the manual station after repairing a failed step
};

// Progress record carried on the RFID tag. Append-only.
class ProductMemory {
 public:
  void append(StepCompletion c) { completed_.push_back(std::move(c)); }
  void append(QualityFlag f) { flags_.push_back(std::move(f)); }

  const std::vector<StepCompletion>& completed_steps() const { return completed_; }
  const std::vector<QualityFlag>& quality_flags() const { return flags_; }

  const QualityFlag* latest_flag() const { return flags_.empty() ? nullptr : &flags_.back(); }
  bool latest_failed() const { return !flags_.empty() && flags_.back().verdict == Verdict::Fail; }

 private:
  std::vector<StepCompletion> completed_;
  std::vector<QualityFlag> flags_;
};

struct Product {
  std::string id;  // RFID tag
  std::vector<StepId> order_config;
  ProductMemory memory;

  std::optional<StepId> next_step() const {
    const auto done = memory.completed_steps().size();
    if (done >= order_config.size()) return std::nullopt;
    return order_config[done];
  }

  bool complete() const { return memory.completed_steps().size() >= order_config.size(); }

  // Steps complete strictly in recipe order.
  void complete_step(const StepId& step, const std::string& station, SimTime at) {
    const auto next = next_step();
    if (!next || *next != step) {
      throw InvalidArgument("product " + id + ": step " + step + " is not the next recipe step");
    }
    memory.append(StepCompletion{step, station, at});
  }
};

// True when completed steps are a prefix of the recipe.
inline bool respects_recipe_order(const Product& p) {
  const auto& done = p.memory.completed_steps();
  if (done.size() > p.order_config.size()) return false;
  for (std::size_t i = 0; i < done.size(); ++i) {
    if (done[i].step != p.order_config[i]) return false;
    if (i > 0 && done[i].at < done[i - 1].at) return false;
  }
  return true;
}

enum class ModuleState { Idle, Busy, Fault, OutOfService };

inline std::string_view to_string(ModuleState s) {
  switch (s) {
    case ModuleState::Idle: return "Idle";
    case ModuleState::Busy: return "Busy";
    case ModuleState::Fault: return "Fault";
    case ModuleState::OutOfService: return "OutOfService";
  }
  return "?";
}

enum class GateState { Closed, Open };

struct StationModule {
  std::string id;  // endpoint id, "<island>.<name>"
  std::string island_id;
  StepId capability;
  Duration service_time{};
  ModuleState state = ModuleState::Idle;
  GateState upstream = GateState::Closed;
  GateState downstream = GateState::Closed;
};

struct DockingStation {
  std::string id;
  std::string island_id;
  bool robot_docked = false;
  GateState gate = GateState::Closed;
};

struct Island {
  std::string id;
  std::string color;  // affiliation light shown by a docked robot
  std::vector<StationModule> modules;
  DockingStation dock;
  std::string safety_loop_id;
};

enum class PoseKind { AtDock, InTransit, AtManualStation };

struct RobotPose {
  PoseKind kind = PoseKind::AtDock;
  std::string island;  // AtDock
  std::string from;    // InTransit
  std::string to;      // InTransit

  std::string location() const {
    switch (kind) {
      case PoseKind::AtDock: return island;
      case PoseKind::AtManualStation: return std::string(kManualStation);
      case PoseKind::InTransit: return to;
    }
    return {};
  }
};

struct Robot {
  std::string id = "robot";
  RobotPose pose;
  std::optional<std::string> carrier;  // product id
  std::optional<std::string> safety_membership;
  safety::LocalState local_safety = safety::LocalState::Clear;
  std::string signal_color;
};

// What each module, dock and the manual station exports to the registry.
struct RegistryRecord {
  enum class Kind { Module, Dock, Manual };

  Kind kind = Kind::Module;
  std::string endpoint;
  std::string island_id;
  StepId capability;
  ModuleState state = ModuleState::Idle;
  GateState upstream = GateState::Closed;
  bool robot_docked = false;
  bool carrier_present = false;
  SimTime updated_at{};
};

class StateRegistry {
 public:
  explicit StateRegistry(Duration staleness_bound = 1500ms) : staleness_bound_(staleness_bound) {}

  void publish(RegistryRecord record) {
    const std::string key = record.endpoint;
    records_.insert_or_assign(key, std::move(record));
  }

  const RegistryRecord* find(const std::string& endpoint) const {
    auto it = records_.find(endpoint);
    return it == records_.end() ? nullptr : &it->second;
  }

  bool stale(const RegistryRecord& r, SimTime now) const { return now - r.updated_at > staleness_bound_; }
  Duration staleness_bound() const { return staleness_bound_; }
  const std::map<std::string, RegistryRecord>& records() const { return records_; }

 private:
  Duration staleness_bound_;
  std::map<std::string, RegistryRecord> records_;
};

enum class DenyReason { NotIdle, NoCapability, Stale };

inline std::string_view to_string(DenyReason r) {
  switch (r) {
    case DenyReason::NotIdle: return "NotIdle";
    case DenyReason::NoCapability: return "NoCapability";
    case DenyReason::Stale: return "Stale";
  }
  return "?";
}

struct HandshakeResult {
  bool granted = false;
  DenyReason reason = DenyReason::NotIdle;

  static HandshakeResult grant() { return {true, DenyReason::NotIdle}; }
  static HandshakeResult deny(DenyReason r) { return {false, r}; }
};

// Decides a transfer from `from` to `to` using registry contents only.
// Modules must be idle with a closed upstream gate and able to perform the
// product's next step; a dock must have an empty robot docked; the manual
// station has an input buffer and substitutes any step. Caller guarantees
// `from` holds the product.
inline HandshakeResult handshake_grant(const StateRegistry& registry, SimTime now, const Product& product,
                                       const std::string& from, const std::string& to) {
  (void)from;
  const RegistryRecord* r = registry.find(to);
  if (r == nullptr) throw UnknownEndpoint("no registry entry for " + to);
  if (registry.stale(*r, now)) return HandshakeResult::deny(DenyReason::Stale);
  switch (r->kind) {
    case RegistryRecord::Kind::Module: {
      if (r->state != ModuleState::Idle || r->upstream == GateState::Open) return HandshakeResult::deny(DenyReason::NotIdle);
      const auto next = product.next_step();
      if (!next || *next != r->capability) return HandshakeResult::deny(DenyReason::NoCapability);
      return HandshakeResult::grant();
    }
    case RegistryRecord::Kind::Dock:
      if (!r->robot_docked || r->carrier_present || r->upstream == GateState::Open) {
        return HandshakeResult::deny(DenyReason::NotIdle);
      }
      return HandshakeResult::grant();
    case RegistryRecord::Kind::Manual:
      return HandshakeResult::grant();  // buffered; the operator works through arrivals in order
  }
  return HandshakeResult::deny(DenyReason::NotIdle);
}

// Symmetric transit times between islands and the manual station.
class TransitMatrix {
 public:
  void set(const std::string& a, const std::string& b, Duration d) {
    if (d < Duration::zero()) throw InvalidArgument("transit time must be non-negative");
    times_.insert_or_assign(key(a, b), d);
  }

  Duration between(const std::string& a, const std::string& b) const {
    if (a == b) return Duration::zero();
    auto it = times_.find(key(a, b));
    if (it == times_.end()) throw InvalidArgument("no transit time between " + a + " and " + b);
    return it->second;
  }

  bool has(const std::string& a, const std::string& b) const { return a == b || times_.count(key(a, b)) > 0; }

  Duration max() const {
    Duration m{};
    for (const auto& [k, d] : times_) m = std::max(m, d);
    return m;
  }

  const std::map<std::pair<std::string, std::string>, Duration>& entries() const { return times_; }
  friend bool operator==(const TransitMatrix&, const TransitMatrix&) = default;

 private:
  static std::pair<std::string, std::string> key(const std::string& a, const std::string& b) {
    return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
  }
  std::map<std::pair<std::string, std::string>, Duration> times_;
};

struct RobotLeg {
  std::string from;
  std::string to;
  bool loaded = true;
};

struct RoutePlan {
  enum class Target { Module, ManualStation, Wait };

  Target target = Target::Wait;
  std::string island_id;  // Module target
  std::string module_id;  // Module target
  std::vector<RobotLeg> legs;
  std::string reason;

  // Product legs only; the robot's empty repositioning is not counted.
  std::size_t loaded_legs() const {
    return static_cast<std::size_t>(std::count_if(legs.begin(), legs.end(), [](const RobotLeg& l) { return l.loaded; }));
  }
};

struct RoutingContext {
  std::span<const Island> islands;
  const TransitMatrix* transit = nullptr;
  bool manual_station = true;
  bool divert_busy_to_manual = true;
  std::map<std::string, safety::LoopState> loop_states;  // by island id; missing means Running
};

// Chooses where the product goes next from `location` (an island id or the
// manual station). Nearest island by transit time with an idle capable
// module wins; a failed quality check or no idle capable module sends the
// product to the manual station.
inline RoutePlan plan_route(const Product& product, const std::string& location, const RoutingContext& ctx,
                            const Robot& robot) {
  const auto next = product.next_step();
  if (!next) throw InvalidArgument("product " + product.id + " has no remaining step");
  if (ctx.transit == nullptr) throw InvalidArgument("routing needs a transit matrix");

  auto with_legs = [&](RoutePlan plan, const std::string& dest) {
    if (dest == location) return plan;
    const bool carrying = robot.carrier && *robot.carrier == product.id;
    if (!carrying && robot.pose.location() != location) plan.legs.push_back({robot.pose.location(), location, false});
    plan.legs.push_back({location, dest, true});
    return plan;
  };
  auto manual_plan = [&](std::string reason) {
    RoutePlan p;
    p.target = RoutePlan::Target::ManualStation;
    p.reason = std::move(reason);
    return with_legs(std::move(p), std::string(kManualStation));
  };

  if (product.memory.latest_failed() && ctx.manual_station) return manual_plan("quality check failed");

  auto running = [&](const std::string& island) {
    auto it = ctx.loop_states.find(island);
    return it == ctx.loop_states.end() || it->second == safety::LoopState::Running;
  };

  bool any_capable = false;
  const StationModule* best = nullptr;
  const Island* best_island = nullptr;
  Duration best_time{};
  for (const auto& island : ctx.islands) {
    if (!running(island.id)) continue;
    for (const auto& m : island.modules) {
      if (m.capability != *next) continue;
      if (m.state == ModuleState::Fault || m.state == ModuleState::OutOfService) continue;
      any_capable = true;
      if (m.state != ModuleState::Idle || m.upstream == GateState::Open) continue;
      if (!ctx.transit->has(location, island.id)) continue;
      const Duration t = ctx.transit->between(location, island.id);
      if (best == nullptr || t < best_time) {
        best = &m;
        best_island = &island;
        best_time = t;
      }
    }
  }

  if (best != nullptr) {
    RoutePlan p;
    p.target = RoutePlan::Target::Module;
    p.island_id = best_island->id;
    p.module_id = best->id;
    p.reason = "idle capable module";
    return with_legs(std::move(p), best_island->id);
  }
  if (ctx.manual_station && (!any_capable || ctx.divert_busy_to_manual)) {
    return manual_plan(any_capable ? "capable modules busy" : "no capable module");
  }
  if (any_capable) {
    RoutePlan p;
    p.target = RoutePlan::Target::Wait;
    p.reason = "capable modules busy";
    return p;
  }
  throw NoRouteAvailable("no module can perform " + *next + " and no manual station is configured");
}

struct InspectionSettings {
  double defect_probability = 0.0;
  std::int64_t image_bytes = 2'000'000;
  Duration inference_time = 200ms;
  std::int64_t verdict_bytes = 64;
  friend bool operator==(const InspectionSettings&, const InspectionSettings&) = default;
};

struct InspectionOutcome {
  Verdict verdict = Verdict::Pass;
  Duration cloud_rtt{};
  bool timed_out = false;
  SimTime captured_at{};
  SimTime verdict_at{};  // when the flag takes effect
  StepId step;
};

// Image capture triggered by the RFID read on the robot's conveyor. The
// image goes up the link, is classified in the cloud, and the verdict comes
// back down. A verdict later than the transit defaults to Pass with a timeout
// flag so transport never waits on it. Appends the flag to the product.
inline InspectionOutcome inspect_in_transit(const Robot& robot, Product& product, const link::LinkModel& model,
                                            const link::LinkConfig& cfg, const InspectionSettings& settings,
                                            SimTime now, Duration transit_duration, RngStream& rng) {
  if (robot.pose.kind != PoseKind::InTransit || robot.carrier != product.id) {
    throw InvalidArgument("inspection needs the robot in transit carrying the product");
  }
  const auto& done = product.memory.completed_steps();
  if (done.empty()) throw InvalidArgument("product " + product.id + " has no assembled step to inspect");

  InspectionOutcome out;
  out.step = done.back().step;
  out.captured_at = now;
  const bool defect = rng.bernoulli(settings.defect_probability);
  const Duration up = model.one_way_latency(cfg, now, settings.image_bytes);
  const SimTime answer_leaves = now + up + settings.inference_time;
  const Duration down = model.one_way_latency(cfg, answer_leaves, settings.verdict_bytes);
  out.cloud_rtt = up + settings.inference_time + down;
  out.timed_out = out.cloud_rtt > transit_duration;
  out.verdict = (defect && !out.timed_out) ? Verdict::Fail : Verdict::Pass;
  out.verdict_at = now + (out.timed_out ? transit_duration : out.cloud_rtt);
  product.memory.append(QualityFlag{out.step, out.verdict, out.verdict_at, out.timed_out, false});
  return out;
}

struct DockResult {
  bool docked = false;
  std::string reason;
};

// Docking joins the island's safety loop and shows the island color.
inline DockResult dock(Robot& robot, Island& island, safety::SafetySystem& safety, SimTime now) {
  if (island.dock.robot_docked) return {false, "dock occupied"};
  if (safety.loop(island.safety_loop_id).state == safety::LoopState::SafeStop) {
    return {false, "island in safe stop"};
  }
  island.dock.robot_docked = true;
  robot.pose = RobotPose{PoseKind::AtDock, island.id, {}, {}};
  safety.join(now, robot.id, island.safety_loop_id);
  robot.safety_membership = island.safety_loop_id;
  robot.signal_color = island.color;
  return {true, {}};
}

// After undocking the robot's safety behavior is isolated from the islands.
inline void undock(Robot& robot, Island& island, safety::SafetySystem& safety, SimTime now, const std::string& to) {
  island.dock.robot_docked = false;
  safety.leave(now, robot.id);
  robot.safety_membership.reset();
  robot.signal_color.clear();
  robot.pose = RobotPose{PoseKind::InTransit, {}, island.id, to};
}

}  // namespace fabsim::factory
