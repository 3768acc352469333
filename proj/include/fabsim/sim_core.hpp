#pragma once

// Deterministic discrete-event engine: integer-nanosecond virtual clock,
// event queue with stable tie-breaking, named RNG sub-streams.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fabsim/errors.hpp"

namespace fabsim {

// Virtual clock. Time points count nanoseconds since simulation start.
struct SimClock {
  using rep = std::int64_t;
  using period = std::nano;
  using duration = std::chrono::duration<rep, period>;
  using time_point = std::chrono::time_point<SimClock>;
  static constexpr bool is_steady = true;
};

using Duration = SimClock::duration;
using SimTime = SimClock::time_point;

constexpr SimTime at_ns(std::int64_t ns) { return SimTime{Duration{ns}}; }
constexpr std::int64_t to_ns(SimTime t) { return t.time_since_epoch().count(); }
constexpr std::int64_t to_ns(Duration d) { return d.count(); }
constexpr double to_seconds(Duration d) { return static_cast<double>(d.count()) * 1e-9; }

inline Duration from_seconds(double seconds) {
  return Duration{static_cast<std::int64_t>(std::llround(seconds * 1e9))};
}

// Exact rational number of nanoseconds. Used where a duration is not an
// integer number of nanoseconds (OFDM symbols, high numerologies) so that
// rounding happens once, at render time.
class Rational {
 public:
  constexpr Rational() = default;
  constexpr Rational(std::int64_t num, std::int64_t den = 1) : num_(num), den_(den) {
    if (den_ == 0) throw InvalidArgument("rational with zero denominator");
    normalize();
  }

  constexpr std::int64_t num() const { return num_; }
  constexpr std::int64_t den() const { return den_; }

  // Round half away from zero.
  constexpr std::int64_t rounded() const {
    const std::int64_t q = num_ / den_;
    const std::int64_t r = num_ % den_;
    if (2 * (r < 0 ? -r : r) >= den_) return num_ < 0 ? q - 1 : q + 1;
    return q;
  }
  constexpr Duration to_duration() const { return Duration{rounded()}; }
  constexpr double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  friend constexpr Rational operator*(Rational a, Rational b) {
    const std::int64_t g1 = std::gcd(a.num_, b.den_);
    const std::int64_t g2 = std::gcd(b.num_, a.den_);
    return Rational{(a.num_ / g1) * (b.num_ / g2), (a.den_ / g2) * (b.den_ / g1)};
  }
  friend constexpr Rational operator/(Rational a, Rational b) {
    if (b.num_ == 0) throw InvalidArgument("rational division by zero");
    return a * Rational{b.den_, b.num_};
  }
  friend constexpr bool operator==(const Rational&, const Rational&) = default;

 private:
  constexpr void normalize() {
    if (den_ < 0) {
      num_ = -num_;
      den_ = -den_;
    }
    const std::int64_t g = std::gcd(num_, den_);
    if (g > 1) {
      num_ /= g;
      den_ /= g;
    }
  }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

// Seeded random stream. Identical (seed, stream_id) pairs produce identical
// sequences on every platform: the generator is std::mt19937_64 (fully
// specified by the standard) and all distributions are computed here rather
// than through the implementation-defined <random> distributions.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view stream_id)
      : seed_(seed), stream_id_(stream_id), engine_(mix(seed, stream_id)) {}

  std::uint64_t seed() const { return seed_; }
  const std::string& stream_id() const { return stream_id_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  double exponential(double mean) { return -mean * std::log1p(-uniform()); }

 private:
  static std::uint64_t mix(std::uint64_t seed, std::string_view id) {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (unsigned char c : id) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    // splitmix64 finalizer
    std::uint64_t z = seed ^ h;
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::string stream_id_;
  std::mt19937_64 engine_;
};

// Events at the same instant run safety lane first, then in scheduling order.
enum class Lane : std::uint8_t { Safety = 0, Normal = 1 };

class EventHandle {
 public:
  EventHandle() = default;
  explicit EventHandle(std::uint64_t id) : id_(id) {}
  std::uint64_t id() const { return id_; }
  bool valid() const { return id_ != 0; }
  friend bool operator==(const EventHandle&, const EventHandle&) = default;

 private:
  std::uint64_t id_ = 0;
};

struct SimSummary {
  SimTime clock{};
  std::uint64_t total_events = 0;
  std::map<std::string, std::uint64_t> events_by_owner;
};

class Engine {
 public:
  using Action = std::function<void()>;

  SimTime now() const { return now_; }

  EventHandle schedule(SimTime fire_at, std::string owner, Action action, Lane lane = Lane::Normal) {
    if (fire_at < now_) {
      throw SchedulingInPast("event for " + owner + " at " + std::to_string(to_ns(fire_at)) +
                             " ns is before now (" + std::to_string(to_ns(now_)) + " ns)");
    }
    const std::uint64_t seq = ++next_sequence_;
    queue_.push_back(Entry{fire_at, lane, seq, std::move(owner), std::move(action)});
    std::push_heap(queue_.begin(), queue_.end(), Later{});
    live_.insert(seq);
    return EventHandle{seq};
  }

  EventHandle schedule_in(Duration delay, std::string owner, Action action, Lane lane = Lane::Normal) {
    return schedule(now_ + delay, std::move(owner), std::move(action), lane);
  }

  // Returns false if the event already fired or was cancelled.
  bool cancel(EventHandle handle) { return live_.erase(handle.id()) > 0; }

  bool pending(EventHandle handle) const { return live_.count(handle.id()) > 0; }

  std::size_t queued() const { return live_.size(); }

  SimSummary run_until(SimTime deadline) {
    if (deadline < now_) throw SchedulingInPast("run_until deadline lies before the current clock");
    while (!queue_.empty() && queue_.front().fire_at <= deadline) {
      std::pop_heap(queue_.begin(), queue_.end(), Later{});
      Entry entry = std::move(queue_.back());
      queue_.pop_back();
      if (live_.erase(entry.sequence) == 0) continue;  // cancelled
      now_ = entry.fire_at;
      ++summary_.total_events;
      ++summary_.events_by_owner[entry.owner];
      entry.action();
    }
    now_ = deadline;
    summary_.clock = now_;
    return summary_;
  }

  const SimSummary& summary() const { return summary_; }

 private:
  struct Entry {
    SimTime fire_at;
    Lane lane;
    std::uint64_t sequence;
    std::string owner;
    Action action;
  };
  // Max-heap comparator that surfaces the earliest (fire_at, lane, sequence).
  struct Later {
    bool operator()(const Entry& a, const Entry& b) const {
      if (a.fire_at != b.fire_at) return a.fire_at > b.fire_at;
      if (a.lane != b.lane) return a.lane > b.lane;
      return a.sequence > b.sequence;
    }
  };

  SimTime now_{};
  std::uint64_t next_sequence_ = 0;
  std::vector<Entry> queue_;
  std::unordered_set<std::uint64_t> live_;
  SimSummary summary_;
};

// A timed activity that can be suspended and resumed (processing, conveyor
// transfers, robot transit). Remaining time is preserved across pauses.
class PausableTimer {
 public:
  PausableTimer() = default;

  void start(Engine& engine, Duration length, std::string owner, Engine::Action on_done) {
    engine_ = &engine;
    owner_ = std::move(owner);
    on_done_ = std::move(on_done);
    remaining_ = length;
    active_ = true;
    paused_ = false;
    arm();
  }

  void pause() {
    if (!active_ || paused_) return;
    remaining_ = std::max(Duration::zero(), deadline_ - engine_->now());
    engine_->cancel(handle_);
    paused_ = true;
  }

  void resume() {
    if (!active_ || !paused_) return;
    paused_ = false;
    arm();
  }

  void cancel() {
    if (active_ && engine_ != nullptr) engine_->cancel(handle_);
    active_ = false;
    paused_ = false;
  }

  bool active() const { return active_; }
  bool paused() const { return paused_; }

 private:
  void arm() {
    deadline_ = engine_->now() + remaining_;
    handle_ = engine_->schedule(deadline_, owner_, [this] {
      active_ = false;
      auto done = std::move(on_done_);
      done();
    });
  }

  Engine* engine_ = nullptr;
  std::string owner_;
  Engine::Action on_done_;
  Duration remaining_{};
  SimTime deadline_{};
  EventHandle handle_;
  bool active_ = false;
  bool paused_ = false;
};

}  // namespace fabsim
