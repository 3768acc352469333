#pragma once

// Link-level reliability and throughput: anchored BLER-vs-SNR curves per
// (waveform, channel), Bernoulli transmission sampling, survival-time
// availability and one-way latency composition.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fabsim/errors.hpp"
#include "fabsim/nr_frame.hpp"
#include "fabsim/sim_core.hpp"

namespace fabsim::link {

enum class Waveform { CpOfdm, POfdm, WOfdm };

inline std::string_view to_string(Waveform w) {
  switch (w) {
    case Waveform::CpOfdm: return "CP-OFDM";
    case Waveform::POfdm: return "P-OFDM";
    case Waveform::WOfdm: return "W-OFDM";
  }
  return "?";
}

inline Waveform parse_waveform(std::string_view s) {
  if (s == "CP-OFDM") return Waveform::CpOfdm;
  if (s == "P-OFDM") return Waveform::POfdm;
  if (s == "W-OFDM") return Waveform::WOfdm;
  throw InvalidArgument("unknown waveform '" + std::string(s) + "' (CP-OFDM, P-OFDM, W-OFDM)");
}

// Channels are open-ended: any name with configured anchors is usable.
inline constexpr std::string_view kEva70 = "EVA70";
inline constexpr std::string_view kV2vUrbanNlos = "V2V-Urban-NLOS";

struct BlerAnchor {
  double snr_db;
  double bler;
  friend bool operator==(const BlerAnchor&, const BlerAnchor&) = default;
};

// Piecewise log-linear BLER(SNR). Below the first anchor the first segment's
// slope continues (capped at 1); beyond the last anchor BLER falls by
// `tail_slope` decades per dB. Never below `floor`.
class BlerCurve {
 public:
  explicit BlerCurve(std::vector<BlerAnchor> anchors, double floor = 0.0, double tail_slope = 1.0)
      : anchors_(std::move(anchors)), floor_(floor), tail_slope_(tail_slope) {
    if (anchors_.size() < 2) throw InvalidArgument("a BLER curve needs at least two anchors");
    for (std::size_t i = 0; i < anchors_.size(); ++i) {
      const auto& a = anchors_[i];
      if (!(a.bler > 0.0 && a.bler <= 1.0)) throw InvalidArgument("BLER anchor outside (0, 1]");
      if (i > 0 && !(a.snr_db > anchors_[i - 1].snr_db)) throw InvalidArgument("BLER anchors must be sorted by SNR");
      if (i > 0 && !(a.bler < anchors_[i - 1].bler)) throw InvalidArgument("BLER must strictly decrease with SNR");
    }
    if (floor_ < 0.0 || floor_ >= anchors_.back().bler) throw InvalidArgument("BLER floor must lie in [0, last anchor)");
    if (!(tail_slope_ > 0.0)) throw InvalidArgument("BLER tail slope must be positive");
  }

  double at(double snr_db) const {
    const auto& first = anchors_.front();
    const auto& last = anchors_.back();
    double log_b;
    if (snr_db < first.snr_db) {
      log_b = std::log10(first.bler) + segment_slope(0) * (snr_db - first.snr_db);
    } else if (snr_db > last.snr_db) {
      log_b = std::log10(last.bler) - tail_slope_ * (snr_db - last.snr_db);
    } else {
      auto hi = std::lower_bound(anchors_.begin(), anchors_.end(), snr_db,
                                 [](const BlerAnchor& a, double s) { return a.snr_db < s; });
      if (hi->snr_db == snr_db) return std::max(floor_, hi->bler);
      const auto lo = std::prev(hi);
      const double t = (snr_db - lo->snr_db) / (hi->snr_db - lo->snr_db);
      log_b = std::log10(lo->bler) + t * (std::log10(hi->bler) - std::log10(lo->bler));
    }
    return std::clamp(std::pow(10.0, log_b), floor_, 1.0);
  }

  // SNR at which the curve reaches `bler`. Exact anchors map back exactly.
  double snr_for(double bler) const {
    if (!(bler > floor_ && bler <= 1.0)) throw InvalidArgument("target BLER outside (floor, 1]");
    const double target = std::log10(bler);
    for (std::size_t i = 0; i < anchors_.size(); ++i) {
      if (anchors_[i].bler == bler) return anchors_[i].snr_db;
    }
    if (bler > anchors_.front().bler) {
      return anchors_.front().snr_db + (target - std::log10(anchors_.front().bler)) / segment_slope(0);
    }
    if (bler < anchors_.back().bler) {
      return anchors_.back().snr_db + (std::log10(anchors_.back().bler) - target) / tail_slope_;
    }
    for (std::size_t i = 1; i < anchors_.size(); ++i) {
      if (bler > anchors_[i].bler) {
        const double l0 = std::log10(anchors_[i - 1].bler);
        const double l1 = std::log10(anchors_[i].bler);
        return anchors_[i - 1].snr_db + (target - l0) / (l1 - l0) * (anchors_[i].snr_db - anchors_[i - 1].snr_db);
      }
    }
    return anchors_.back().snr_db;
  }

  BlerCurve shifted(double delta_db) const {
    auto moved = anchors_;
    for (auto& a : moved) a.snr_db += delta_db;
    return BlerCurve{std::move(moved), floor_, tail_slope_};
  }

  const std::vector<BlerAnchor>& anchors() const { return anchors_; }
  double floor() const { return floor_; }
  double tail_slope() const { return tail_slope_; }
  friend bool operator==(const BlerCurve&, const BlerCurve&) = default;

 private:
  // log10(BLER) change per dB on segment i; negative.
  double segment_slope(std::size_t i) const {
    const double s = (std::log10(anchors_[i + 1].bler) - std::log10(anchors_[i].bler)) /
                     (anchors_[i + 1].snr_db - anchors_[i].snr_db);
    return s;
  }

  std::vector<BlerAnchor> anchors_;
  double floor_;
  double tail_slope_;
};

struct ThroughputAnchor {
  double snr_db;
  double bits_per_second;
  friend bool operator==(const ThroughputAnchor&, const ThroughputAnchor&) = default;
};

// Piecewise-linear, clamped at both ends.
class ThroughputTable {
 public:
  ThroughputTable() = default;
  explicit ThroughputTable(std::vector<ThroughputAnchor> anchors) : anchors_(std::move(anchors)) {
    for (std::size_t i = 0; i < anchors_.size(); ++i) {
      if (anchors_[i].bits_per_second < 0.0) throw InvalidArgument("negative throughput anchor");
      if (i > 0 && !(anchors_[i].snr_db > anchors_[i - 1].snr_db)) {
        throw InvalidArgument("throughput anchors must be sorted by SNR");
      }
      if (i > 0 && anchors_[i].bits_per_second < anchors_[i - 1].bits_per_second) {
        throw InvalidArgument("throughput must not decrease with SNR");
      }
    }
  }

  bool empty() const { return anchors_.empty(); }

  double at(double snr_db) const {
    if (anchors_.empty()) throw UnknownCurve("no throughput anchors configured");
    if (snr_db <= anchors_.front().snr_db) return anchors_.front().bits_per_second;
    if (snr_db >= anchors_.back().snr_db) return anchors_.back().bits_per_second;
    auto hi = std::lower_bound(anchors_.begin(), anchors_.end(), snr_db,
                               [](const ThroughputAnchor& a, double s) { return a.snr_db < s; });
    if (hi->snr_db == snr_db) return hi->bits_per_second;
    const auto lo = std::prev(hi);
    const double t = (snr_db - lo->snr_db) / (hi->snr_db - lo->snr_db);
    return lo->bits_per_second + t * (hi->bits_per_second - lo->bits_per_second);
  }

  const std::vector<ThroughputAnchor>& anchors() const { return anchors_; }
  friend bool operator==(const ThroughputTable&, const ThroughputTable&) = default;

 private:
  std::vector<ThroughputAnchor> anchors_;
};

inline constexpr std::array<int, 3> kCarrierFrequenciesMhz{800, 2600, 3500};
inline constexpr std::array<int, 3> kBandwidthsMhz{5, 10, 20};

struct LinkConfig {
  Waveform waveform = Waveform::POfdm;
  std::string channel{kEva70};
  double snr_db = 20.0;
  int carrier_mhz = 3500;
  int bandwidth_mhz = 20;
  nr::TtiConfig tti{};
  Duration processing_delay{};

  void validate() const {
    if (std::find(kCarrierFrequenciesMhz.begin(), kCarrierFrequenciesMhz.end(), carrier_mhz) ==
        kCarrierFrequenciesMhz.end()) {
      throw InvalidArgument("carrier frequency must be 800, 2600 or 3500 MHz");
    }
    if (std::find(kBandwidthsMhz.begin(), kBandwidthsMhz.end(), bandwidth_mhz) == kBandwidthsMhz.end()) {
      throw InvalidArgument("bandwidth must be 5, 10 or 20 MHz");
    }
    if (processing_delay < Duration::zero()) throw InvalidArgument("processing delay must be non-negative");
  }
  friend bool operator==(const LinkConfig&, const LinkConfig&) = default;
};

inline constexpr double kWaveformGapDb = 1.7;

class LinkModel {
 public:
  using Key = std::pair<Waveform, std::string>;

  // Shipped anchors. The 1e-5 points (P-OFDM at 15 dB in EVA70 and 19 dB in
  // V2V NLOS) and the 10 Mbit/s at 11 dB throughput point are measured; the
  // remaining anchors only shape the waterfall and ramp. CP-OFDM is the
  // P-OFDM curve shifted by the 1.7 dB waveform gap.
  static LinkModel defaults() {
    LinkModel m;
    const BlerCurve p_eva{{{7.0, 1e-1}, {11.0, 1e-3}, {15.0, 1e-5}}};
    const BlerCurve p_v2v{{{10.0, 1e-1}, {14.5, 1e-3}, {19.0, 1e-5}}};
    m.set_curve(Waveform::POfdm, std::string(kEva70), p_eva);
    m.set_curve(Waveform::POfdm, std::string(kV2vUrbanNlos), p_v2v);
    m.set_curve(Waveform::CpOfdm, std::string(kEva70), p_eva.shifted(kWaveformGapDb));
    m.set_curve(Waveform::CpOfdm, std::string(kV2vUrbanNlos), p_v2v.shifted(kWaveformGapDb));
    m.throughput_ = ThroughputTable{{{-5.0, 0.0},
                                     {0.0, 1.5e6},
                                     {5.0, 4.5e6},
                                     {11.0, 10e6},
                                     {15.0, 13e6},
                                     {20.0, 15e6},
                                     {25.0, 16e6}}};
    return m;
  }

  void set_curve(Waveform w, std::string channel, BlerCurve curve) {
    curves_.insert_or_assign(Key{w, std::move(channel)}, std::move(curve));
  }
  void set_throughput(ThroughputTable table) { throughput_ = std::move(table); }

  const BlerCurve& curve(Waveform w, const std::string& channel) const {
    auto it = curves_.find(Key{w, channel});
    if (it == curves_.end()) {
      throw UnknownCurve("no BLER anchors for " + std::string(to_string(w)) + " on channel " + channel);
    }
    return it->second;
  }

  double bler(const LinkConfig& cfg) const { return curve(cfg.waveform, cfg.channel).at(cfg.snr_db); }
  double throughput(const LinkConfig& cfg) const { return throughput_.at(cfg.snr_db); }

  // Whole TTIs needed to carry the payload at the current throughput.
  Duration air_time(const LinkConfig& cfg, std::int64_t payload_bytes) const {
    if (payload_bytes <= 0) throw InvalidArgument("payload must be positive");
    const double rate = throughput(cfg);
    if (rate <= 0.0) throw RateUnavailable("link throughput is zero at " + std::to_string(cfg.snr_db) + " dB");
    const auto tti = cfg.tti.duration();
    const double bits_per_tti = rate * static_cast<double>(tti.count()) / 1e9;
    const double bits = static_cast<double>(payload_bytes) * 8.0;
    const auto slots = static_cast<std::int64_t>(std::ceil(bits / bits_per_tti * (1.0 - 1e-12)));
    return tti * std::max<std::int64_t>(1, slots);
  }

  Duration one_way_latency(const LinkConfig& cfg, SimTime now, std::int64_t payload_bytes) const {
    const Duration wait = nr::next_tx_opportunity(now, cfg.tti) - now;
    return wait + air_time(cfg, payload_bytes) + cfg.processing_delay;
  }

  const std::map<Key, BlerCurve>& curves() const { return curves_; }
  const ThroughputTable& throughput_table() const { return throughput_; }
  friend bool operator==(const LinkModel&, const LinkModel&) = default;

 private:
  std::map<Key, BlerCurve> curves_;
  ThroughputTable throughput_;
};

enum class TxOutcome { Delivered, Lost };

// One Bernoulli draw per call; Delivered with probability 1 - bler.
inline TxOutcome sample_transmission(double bler, RngStream& rng) {
  return rng.uniform() < bler ? TxOutcome::Lost : TxOutcome::Delivered;
}

inline TxOutcome sample_transmission(const LinkModel& model, const LinkConfig& cfg, RngStream& rng) {
  return sample_transmission(model.bler(cfg), rng);
}

// Service is down only if all k opportunities inside the survival time fail.
inline double availability(double bler, int opportunities) {
  if (opportunities < 1) throw InvalidArgument("survival time must hold at least one opportunity");
  return 1.0 - std::pow(bler, opportunities);
}

struct OutageWindow {
  SimTime from;
  SimTime to;  // exclusive
  friend bool operator==(const OutageWindow&, const OutageWindow&) = default;
};

// The wireless leg as seen by the simulation: BLER sampling plus scripted
// outages during which every attempt fails. A draw is consumed on every
// attempt, so outages never shift the random sequence.
class WirelessChannel {
 public:
  WirelessChannel(const LinkModel& model, LinkConfig cfg, RngStream rng, std::vector<OutageWindow> outages = {})
      : model_(&model), cfg_(std::move(cfg)), rng_(std::move(rng)), outages_(std::move(outages)) {
    cfg_.validate();
    bler_ = model_->bler(cfg_);
  }

  bool attempt(SimTime at) {
    const bool ok = sample_transmission(bler_, rng_) == TxOutcome::Delivered;
    return ok && !in_outage(at);
  }

  bool in_outage(SimTime t) const {
    return std::any_of(outages_.begin(), outages_.end(), [t](const OutageWindow& w) { return t >= w.from && t < w.to; });
  }

  double bler() const { return bler_; }
  const LinkConfig& config() const { return cfg_; }
  const LinkModel& model() const { return *model_; }

 private:
  const LinkModel* model_;
  LinkConfig cfg_;
  RngStream rng_;
  std::vector<OutageWindow> outages_;
  double bler_ = 0.0;
};

struct Transmission {
  SimTime sent_at;                       // first attempt starts
  std::optional<SimTime> delivered_at;   // absent when every attempt failed
  SimTime resolved_at;                   // delivery, or loss known at receiver
  int attempts = 0;
};

// Sends one packet. Attempts start on TTI boundaries and are back to back.
// Later attempts are made only while they finish within `retry_window` of
// creation; a zero window means a single attempt.
template <class Sampler>
Transmission transmit(const LinkModel& model, const LinkConfig& cfg, SimTime created, std::int64_t payload_bytes,
                      Duration retry_window, Sampler&& attempt) {
  const Duration air = model.air_time(cfg, payload_bytes);
  Transmission tx;
  tx.sent_at = nr::next_tx_opportunity(created, cfg.tti);
  SimTime start = tx.sent_at;
  for (;;) {
    ++tx.attempts;
    const SimTime end = start + air;
    if (attempt(start)) {
      tx.delivered_at = end + cfg.processing_delay;
      tx.resolved_at = *tx.delivered_at;
      return tx;
    }
    const SimTime next_end = end + air;
    if (next_end > created + retry_window) {
      tx.resolved_at = end + cfg.processing_delay;
      return tx;
    }
    start = end;
  }
}

}  // namespace fabsim::link
