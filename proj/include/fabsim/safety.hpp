#pragma once

// Distributed safety model: island-confined safety loops, cyclic safety PDU
// supervision with a watchdog, and robot-local fallback safety.

#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "fabsim/errors.hpp"
#include "fabsim/radio_link.hpp"
#include "fabsim/sim_core.hpp"

namespace fabsim::safety {

using namespace std::chrono_literals;

enum class LoopState { Running, SafeStop };

inline std::string_view to_string(LoopState s) { return s == LoopState::Running ? "Running" : "SafeStop"; }

struct SafetyLoop {
  std::string id;
  std::string island_id;
  std::set<std::string> members;
  LoopState state = LoopState::Running;
};

struct LoopTransition {
  std::string loop;
  LoopState from;
  LoopState to;
  std::string cause;
};

// One row of the safety event log. Loop-level rows use the loop id; robot
// local rows use "local:<robot>".
struct SafetyEvent {
  SimTime time;
  std::string loop;
  std::string transition;
  std::string cause;
  int consecutive_missed = 0;
};

enum class Direction { AToB = 0, BToA = 1 };

// Cyclic PDU exchange between the robot's bus coupler (a) and the safety
// controller (b). A direction trips once consecutive_missed * cycle reaches
// the watchdog; the counter restarts after a delivery or a trip.
struct SafetyChannel {
  std::string endpoint_a;
  std::string endpoint_b;
  std::int64_t pdu_size_a_to_b = 60;
  std::int64_t pdu_size_b_to_a = 64;
  Duration cycle = from_seconds(1.0 / 246.19);
  Duration watchdog = 12ms;
  std::array<int, 2> consecutive_missed{};

  void validate() const {
    if (cycle <= Duration::zero()) throw InvalidArgument("safety cycle must be positive");
    if (watchdog < cycle) throw InvalidArgument("watchdog must be at least one cycle");
  }

  int trip_threshold() const {
    return static_cast<int>((watchdog.count() + cycle.count() - 1) / cycle.count());
  }

  int missed(Direction d) const { return consecutive_missed[static_cast<int>(d)]; }

  // Returns true when this miss expires the watchdog.
  bool record(Direction d, bool delivered) {
    int& m = consecutive_missed[static_cast<int>(d)];
    if (delivered) {
      m = 0;
      return false;
    }
    ++m;
    if (Duration{cycle.count() * m} >= watchdog) {
      m = 0;
      return true;
    }
    return false;
  }

  void reset() { consecutive_missed = {}; }
};

struct DeliveryOutcome {
  link::Transmission tx;
  bool delivered = false;
  int consecutive_missed = 0;  // counter value that led to the trip, or after update
  bool watchdog_expired = false;
};

// Sends one PDU. Wired legs are lossless; the wireless leg retries on every
// TTI while the attempt still completes inside `retry_window`.
template <class Sampler>
DeliveryOutcome exchange_pdu(SafetyChannel& channel, Direction d, const link::LinkModel& model,
                             const link::LinkConfig& cfg, SimTime created, Duration retry_window, bool wired,
                             Sampler&& attempt) {
  const std::int64_t size = d == Direction::AToB ? channel.pdu_size_a_to_b : channel.pdu_size_b_to_a;
  DeliveryOutcome out;
  if (wired) {
    out.tx = {created, created, created, 1};
  } else {
    out.tx = link::transmit(model, cfg, created, size, retry_window, attempt);
  }
  out.delivered = out.tx.delivered_at.has_value();
  const int before = channel.missed(d);
  out.watchdog_expired = channel.record(d, out.delivered);
  out.consecutive_missed = out.watchdog_expired ? before + 1 : channel.missed(d);
  return out;
}

inline double pdu_miss_probability(double bler, int attempts) { return std::pow(bler, attempts); }

// Probability that a given cycle completes a run of `threshold` misses.
inline double trip_probability_per_cycle(double bler, int attempts, int threshold) {
  return std::pow(pdu_miss_probability(bler, attempts), threshold);
}

enum class LocalState { Clear, Obstructed, EmergencyStop };

inline std::string_view to_string(LocalState s) {
  switch (s) {
    case LocalState::Clear: return "Clear";
    case LocalState::Obstructed: return "Obstructed";
    case LocalState::EmergencyStop: return "EmergencyStop";
  }
  return "?";
}

enum class Sensor { Laser, Infrared, Bumper };

inline std::string_view to_string(Sensor s) {
  switch (s) {
    case Sensor::Laser: return "laser";
    case Sensor::Infrared: return "infrared";
    case Sensor::Bumper: return "bumper";
  }
  return "?";
}

inline Sensor parse_sensor(std::string_view s) {
  if (s == "laser") return Sensor::Laser;
  if (s == "infrared") return Sensor::Infrared;
  if (s == "bumper") return Sensor::Bumper;
  throw InvalidArgument("unknown sensor '" + std::string(s) + "' (laser, infrared, bumper)");
}

// Robot-local safety. Only sensor readings, the robot's own e-stop and
// explicit resets change it; link state never does.
class LocalSafety {
 public:
  LocalState state() const { return state_; }

  // Laser/infrared detection pauses motion; bumper contact latches a stop.
  LocalState sense(Sensor sensor, bool detecting) {
    if (sensor == Sensor::Bumper) {
      if (detecting) state_ = LocalState::EmergencyStop;
      return state_;
    }
    auto& flag = sensor == Sensor::Laser ? laser_ : infrared_;
    flag = detecting;
    settle();
    return state_;
  }

  LocalState emergency_stop() {
    state_ = LocalState::EmergencyStop;
    return state_;
  }

  LocalState reset() {
    if (state_ == LocalState::EmergencyStop) state_ = LocalState::Clear;
    settle();
    return state_;
  }

 private:
  void settle() {
    if (state_ == LocalState::EmergencyStop) return;
    state_ = (laser_ || infrared_) ? LocalState::Obstructed : LocalState::Clear;
  }

  LocalState state_ = LocalState::Clear;
  bool laser_ = false;
  bool infrared_ = false;
};

// Loops, robot membership and local safety, with an append-only event log.
class SafetySystem {
 public:
  using LoopListener = std::function<void(const LoopTransition&)>;
  using LocalListener = std::function<void(const std::string& robot, LocalState from, LocalState to)>;

  void add_loop(SafetyLoop loop) {
    for (const auto& m : loop.members) {
      if (auto other = loop_of(m)) throw InvalidArgument("endpoint " + m + " already belongs to loop " + *other);
    }
    const std::string id = loop.id;
    loops_.emplace(id, std::move(loop));
  }

  void add_robot(const std::string& robot) { robots_.emplace(robot, RobotSafety{}); }

  void on_loop_transition(LoopListener l) { loop_listeners_.push_back(std::move(l)); }
  void on_local_transition(LocalListener l) { local_listeners_.push_back(std::move(l)); }

  const SafetyLoop& loop(const std::string& id) const {
    auto it = loops_.find(id);
    if (it == loops_.end()) throw UnknownEndpoint("unknown safety loop " + id);
    return it->second;
  }
  const std::map<std::string, SafetyLoop>& loops() const { return loops_; }

  std::optional<std::string> loop_of(const std::string& endpoint) const {
    for (const auto& [id, l] : loops_) {
      if (l.members.count(endpoint)) return id;
    }
    return std::nullopt;
  }

  std::optional<std::string> membership(const std::string& robot) const { return robot_at(robot).loop; }
  LocalState local_state(const std::string& robot) const { return robot_at(robot).local.state(); }
  bool is_robot(const std::string& endpoint) const { return robots_.count(endpoint) > 0; }

  // Robot joins the loop of the island it docks at.
  void join(SimTime now, const std::string& robot, const std::string& loop_id) {
    auto& r = robot_at(robot);
    auto& l = loop_mut(loop_id);
    if (r.loop) throw InvalidArgument("robot " + robot + " is already in loop " + *r.loop);
    l.members.insert(robot);
    r.loop = loop_id;
    log_.push_back({now, loop_id, "join", robot, 0});
  }

  void leave(SimTime now, const std::string& robot) {
    auto& r = robot_at(robot);
    if (!r.loop) return;
    loop_mut(*r.loop).members.erase(robot);
    log_.push_back({now, *r.loop, "leave", robot, 0});
    r.loop.reset();
  }

  // Stops only the source's loop. A robot e-stop also latches its local
  // safety; an undocked robot stops locally and no loop changes.
  std::vector<LoopTransition> estop(SimTime now, const std::string& source) {
    std::vector<LoopTransition> out;
    if (is_robot(source)) {
      apply_local(now, source, "estop", [](LocalSafety& s) { return s.emergency_stop(); });
      if (auto l = robot_at(source).loop) {
        if (auto t = stop(now, *l, source, 0)) out.push_back(*t);
      }
      return out;
    }
    const auto l = loop_of(source);
    if (!l) throw UnknownEndpoint("e-stop source " + source + " is not a member of any safety loop");
    if (auto t = stop(now, *l, source, 0)) out.push_back(*t);
    return out;
  }

  // Watchdog expiry. Logged even when the loop is already stopped.
  std::optional<LoopTransition> watchdog_trip(SimTime now, const std::string& loop_id, const std::string& cause,
                                              int consecutive_missed) {
    auto& l = loop_mut(loop_id);
    if (l.state == LoopState::SafeStop) {
      log_.push_back({now, loop_id, "SafeStop->SafeStop", cause, consecutive_missed});
      return std::nullopt;
    }
    return stop(now, loop_id, cause, consecutive_missed);
  }

  std::optional<LoopTransition> reset_loop(SimTime now, const std::string& loop_id, const std::string& cause = "reset") {
    auto& l = loop_mut(loop_id);
    if (l.state == LoopState::Running) return std::nullopt;
    l.state = LoopState::Running;
    LoopTransition t{loop_id, LoopState::SafeStop, LoopState::Running, cause};
    log_.push_back({now, loop_id, "SafeStop->Running", cause, 0});
    notify(t);
    return t;
  }

  LocalState local_guard(SimTime now, const std::string& robot, Sensor sensor, bool detecting) {
    return apply_local(now, robot, std::string(to_string(sensor)),
                       [&](LocalSafety& s) { return s.sense(sensor, detecting); });
  }

  LocalState reset_robot(SimTime now, const std::string& robot) {
    return apply_local(now, robot, "reset", [](LocalSafety& s) { return s.reset(); });
  }

  const std::vector<SafetyEvent>& log() const { return log_; }

 private:
  struct RobotSafety {
    LocalSafety local;
    std::optional<std::string> loop;
  };

  SafetyLoop& loop_mut(const std::string& id) {
    auto it = loops_.find(id);
    if (it == loops_.end()) throw UnknownEndpoint("unknown safety loop " + id);
    return it->second;
  }
  RobotSafety& robot_at(const std::string& id) {
    auto it = robots_.find(id);
    if (it == robots_.end()) throw UnknownEndpoint("unknown robot " + id);
    return it->second;
  }
  const RobotSafety& robot_at(const std::string& id) const {
    auto it = robots_.find(id);
    if (it == robots_.end()) throw UnknownEndpoint("unknown robot " + id);
    return it->second;
  }

  std::optional<LoopTransition> stop(SimTime now, const std::string& loop_id, const std::string& cause, int missed) {
    auto& l = loop_mut(loop_id);
    if (l.state == LoopState::SafeStop) return std::nullopt;
    l.state = LoopState::SafeStop;
    LoopTransition t{loop_id, LoopState::Running, LoopState::SafeStop, cause};
    log_.push_back({now, loop_id, "Running->SafeStop", cause, missed});
    notify(t);
    return t;
  }

  template <class F>
  LocalState apply_local(SimTime now, const std::string& robot, const std::string& cause, F&& f) {
    auto& r = robot_at(robot);
    const LocalState before = r.local.state();
    const LocalState after = f(r.local);
    if (after != before) {
      log_.push_back({now, "local:" + robot, std::string(to_string(before)) + "->" + std::string(to_string(after)),
                      cause, 0});
      for (auto& l : local_listeners_) l(robot, before, after);
    }
    return after;
  }

  void notify(const LoopTransition& t) {
    for (auto& l : loop_listeners_) l(t);
  }

  std::map<std::string, SafetyLoop> loops_;
  std::map<std::string, RobotSafety> robots_;
  std::vector<SafetyEvent> log_;
  std::vector<LoopListener> loop_listeners_;
  std::vector<LocalListener> local_listeners_;
};

}  // namespace fabsim::safety
