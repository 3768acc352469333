#pragma once

// Stream generators for the measured packet mix and rate accounting.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fabsim/errors.hpp"
#include "fabsim/sim_core.hpp"

namespace fabsim::traffic {

enum class StreamClass { SafetyRelevant, NonSafetyRelevant, NetworkOrganization };

inline std::string_view to_string(StreamClass c) {
  switch (c) {
    case StreamClass::SafetyRelevant: return "safety";
    case StreamClass::NonSafetyRelevant: return "non-safety";
    case StreamClass::NetworkOrganization: return "organization";
  }
  return "?";
}

inline StreamClass parse_stream_class(std::string_view s) {
  if (s == "safety") return StreamClass::SafetyRelevant;
  if (s == "non-safety") return StreamClass::NonSafetyRelevant;
  if (s == "organization") return StreamClass::NetworkOrganization;
  throw InvalidArgument("unknown stream class '" + std::string(s) + "' (safety, non-safety, organization)");
}

enum class Pattern { Periodic, Poisson };

inline std::string_view to_string(Pattern p) { return p == Pattern::Periodic ? "periodic" : "poisson"; }

inline Pattern parse_pattern(std::string_view s) {
  if (s == "periodic") return Pattern::Periodic;
  if (s == "poisson") return Pattern::Poisson;
  throw InvalidArgument("unknown traffic pattern '" + std::string(s) + "' (periodic, poisson)");
}

struct TrafficProfile {
  std::string name;
  std::string source;
  std::string destination;
  std::string protocol;
  StreamClass cls = StreamClass::NonSafetyRelevant;
  std::int64_t payload_bytes = 0;  // on-wire size
  double rate_hz = 0.0;
  Pattern pattern = Pattern::Periodic;
  Duration phase{};

  void validate() const {
    if (name.empty()) throw InvalidArgument("traffic profile needs a name");
    if (payload_bytes <= 0) throw InvalidArgument("stream " + name + ": payload must be positive");
    if (!(rate_hz > 0.0) || !std::isfinite(rate_hz)) throw InvalidArgument("stream " + name + ": rate must be positive");
    if (phase < Duration::zero()) throw InvalidArgument("stream " + name + ": phase must be non-negative");
  }

  double nominal_bitrate() const { return rate_hz * static_cast<double>(payload_bytes) * 8.0; }

  // Period rendered to whole nanoseconds.
  Duration period() const { return from_seconds(1.0 / rate_hz); }

  friend bool operator==(const TrafficProfile&, const TrafficProfile&) = default;
};

// Residual traffic is split across three camera streams.
struct CameraOptions {
  double total_bps = 5.97e6;
  std::int64_t packet_bytes = 1400;
  double forward_share = 0.20;
  double panorama_share = 0.65;
  double product_share = 0.15;
  friend bool operator==(const CameraOptions&, const CameraOptions&) = default;
};

// The six measured PROFINET rows (source, destination, protocol, length, frequency).
inline std::vector<TrafficProfile> measured_rows() {
  using SC = StreamClass;
  return {
      {"pnio-hilscher-phoenixc", "Hilscher", "PhoenixC", "PNIO", SC::SafetyRelevant, 60, 246.19},
      {"pndcp-hilscher-pnmc", "Hilscher", "PN-MC", "PN-DCP", SC::NetworkOrganization, 60, 0.51},
      {"pndcp-phoenixc-pnmc", "PhoenixC", "PN-MC", "PN-DCP", SC::NetworkOrganization, 60, 1.36},
      {"pnio-phoenixc-hilscher", "PhoenixC", "Hilscher", "PNIO", SC::SafetyRelevant, 64, 246.19},
      {"lldp-phoenixc-lldpmc", "PhoenixC", "LLDP MC", "LLDP", SC::NetworkOrganization, 212, 0.17},
      {"ptcp-phoenixc-lldpmc", "PhoenixC", "LLDP MC", "PN-PTCP", SC::NetworkOrganization, 60, 4.94},
  };
}

// Measured rows plus camera streams sized so the nominal total equals
// `camera.total_bps` (5.97 Mbit/s by default).
inline std::vector<TrafficProfile> measured_catalog(const CameraOptions& camera = {}) {
  auto catalog = measured_rows();
  double measured = 0.0;
  for (const auto& p : catalog) measured += p.nominal_bitrate();
  const double residual = camera.total_bps - measured;
  const double share_sum = camera.forward_share + camera.panorama_share + camera.product_share;
  if (!(residual > 0.0)) throw InvalidArgument("camera residual must be positive");
  if (camera.packet_bytes <= 0) throw InvalidArgument("camera packet size must be positive");
  if (camera.forward_share < 0 || camera.panorama_share < 0 || camera.product_share < 0 ||
      std::abs(share_sum - 1.0) > 1e-9) {
    throw InvalidArgument("camera shares must be non-negative and sum to 1");
  }
  const double bits = static_cast<double>(camera.packet_bytes) * 8.0;
  auto add = [&](const char* name, const char* dst, double share) {
    if (share <= 0.0) return;
    catalog.push_back({name, "Robot", dst, "RTP/UDP", StreamClass::NonSafetyRelevant, camera.packet_bytes,
                       residual * share / bits});
  };
  add("cam-forward", "Cloud", camera.forward_share);
  add("cam-360", "Telepresence", camera.panorama_share);
  add("cam-product", "Cloud", camera.product_share);
  return catalog;
}

// Per-packet timeline. `delivered_at` is set once a delivery is resolved.
struct PacketRecord {
  enum class Status { InFlight, Delivered, Lost };

  std::string stream;
  std::int64_t seq = 0;
  StreamClass cls = StreamClass::NonSafetyRelevant;
  std::int64_t size_bytes = 0;
  SimTime created_at{};
  SimTime sent_at{};
  std::optional<SimTime> delivered_at;
  std::optional<SimTime> resolved_at;  // delivery, or when the loss became known
  Status status = Status::InFlight;
  int attempts = 0;
};

// Emits creation instants for one profile. Periodic instants are
// phase + round(k / rate) from a per-k computation, so there is no drift.
class PacketGenerator {
 public:
  PacketGenerator(TrafficProfile profile, RngStream rng) : profile_(std::move(profile)), rng_(std::move(rng)) {
    profile_.validate();
    next_ = first();
  }

  // Next creation instant not after `horizon`, or nullopt once exhausted.
  std::optional<SimTime> next(SimTime horizon) {
    if (next_ > horizon) return std::nullopt;
    const SimTime out = next_;
    ++k_;
    next_ = profile_.pattern == Pattern::Periodic ? periodic(k_) : next_ + gap();
    return out;
  }

  const TrafficProfile& profile() const { return profile_; }

 private:
  SimTime first() { return profile_.pattern == Pattern::Periodic ? periodic(0) : SimTime{profile_.phase} + gap(); }

  SimTime periodic(std::int64_t k) const {
    const double offset_ns = static_cast<double>(k) * 1e9 / profile_.rate_hz;
    return SimTime{profile_.phase} + Duration{std::llround(offset_ns)};
  }

  Duration gap() { return Duration{std::llround(rng_.exponential(1e9 / profile_.rate_hz))}; }

  TrafficProfile profile_;
  RngStream rng_;
  std::int64_t k_ = 0;
  SimTime next_{};
};

// All creation instants in [0, horizon].
inline std::vector<SimTime> generate(const TrafficProfile& profile, SimTime horizon, RngStream rng) {
  if (horizon < SimTime{}) throw InvalidArgument("horizon must be non-negative");
  PacketGenerator gen{profile, std::move(rng)};
  std::vector<SimTime> out;
  while (auto t = gen.next(horizon)) out.push_back(*t);
  return out;
}

// Bits created in [start, start + window) divided by the window.
inline double aggregate_rate(std::span<const PacketRecord> records, Duration window, SimTime start = {}) {
  if (window <= Duration::zero()) throw InvalidArgument("rate window must be positive");
  double bits = 0.0;
  for (const auto& r : records) {
    if (r.created_at >= start && r.created_at < start + window) bits += static_cast<double>(r.size_bytes) * 8.0;
  }
  return bits / to_seconds(window);
}

// Mean emission frequency, (n - 1) over the first-to-last span. Unlike
// count / horizon it is unbiased for streams with only a few emissions.
inline double observed_frequency(std::span<const SimTime> created) {
  if (created.size() < 2) return 0.0;
  const Duration span = created.back() - created.front();
  if (span <= Duration::zero()) return 0.0;
  return static_cast<double>(created.size() - 1) / to_seconds(span);
}

}  // namespace fabsim::traffic
