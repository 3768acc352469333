#pragma once

// 5G NR timing: numerology, frame/slot/mini-slot structure, slot formats,
// bandwidth parts and transmission-opportunity alignment.

#include <array>
#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fabsim/errors.hpp"
#include "fabsim/sim_core.hpp"

namespace fabsim::nr {

using namespace std::chrono_literals;

inline constexpr Duration kFrameDuration = 10ms;
inline constexpr Duration kSubframeDuration = 1ms;
inline constexpr int kSubframesPerFrame = 10;
inline constexpr int kSymbolsPerSlot = 14;
inline constexpr int kMaxNumerology = 6;

class Numerology {
 public:
  constexpr explicit Numerology(int mu) : mu_(mu) {
    if (mu < 0 || mu > kMaxNumerology) throw InvalidArgument("numerology mu out of range 0..6");
  }
  constexpr int mu() const { return mu_; }
  constexpr int subcarrier_spacing_khz() const { return 15 << mu_; }
  constexpr int slots_per_subframe() const { return 1 << mu_; }
  constexpr int slots_per_frame() const { return kSubframesPerFrame << mu_; }
  friend constexpr bool operator==(const Numerology&, const Numerology&) = default;

 private:
  int mu_ = 0;
};

// Slot length in nanoseconds: 1 ms / 2^mu.
constexpr Rational slot_duration(Numerology n) {
  return Rational{std::chrono::duration_cast<Duration>(kSubframeDuration).count(),
                  std::int64_t{1} << n.mu()};
}

// Normal-CP symbol length, slot / 14. For mu = 0 this is 500000/7 ns.
constexpr Rational symbol_duration(Numerology n) { return slot_duration(n) / Rational{kSymbolsPerSlot}; }

inline std::optional<Numerology> numerology_for_scs(int scs_khz) {
  for (int mu = 0; mu <= kMaxNumerology; ++mu) {
    if ((15 << mu) == scs_khz) return Numerology{mu};
  }
  return std::nullopt;
}

enum class SymbolDirection : char { Downlink = 'D', Flexible = 'X', Uplink = 'U' };

class SlotFormat {
 public:
  explicit SlotFormat(const std::array<SymbolDirection, kSymbolsPerSlot>& symbols) : symbols_(symbols) {}

  // Parses a 14-character pattern of D, X and U.
  static SlotFormat parse(std::string_view pattern) {
    if (pattern.size() != kSymbolsPerSlot) {
      throw InvalidArgument("slot format needs exactly 14 symbols, got " + std::to_string(pattern.size()));
    }
    std::array<SymbolDirection, kSymbolsPerSlot> symbols{};
    for (std::size_t i = 0; i < pattern.size(); ++i) {
      switch (pattern[i]) {
        case 'D': symbols[i] = SymbolDirection::Downlink; break;
        case 'X': symbols[i] = SymbolDirection::Flexible; break;
        case 'U': symbols[i] = SymbolDirection::Uplink; break;
        default:
          throw InvalidArgument(std::string("slot format symbol must be D, X or U, got '") + pattern[i] + "'");
      }
    }
    return SlotFormat{symbols};
  }

  const std::array<SymbolDirection, kSymbolsPerSlot>& symbols() const { return symbols_; }

  int count(SymbolDirection d) const {
    int n = 0;
    for (auto s : symbols_) n += (s == d);
    return n;
  }

  std::string to_string() const {
    std::string out;
    for (auto s : symbols_) out.push_back(static_cast<char>(s));
    return out;
  }

  friend bool operator==(const SlotFormat&, const SlotFormat&) = default;

 private:
  std::array<SymbolDirection, kSymbolsPerSlot> symbols_;
};

// Slot-format indicator table. Ships with all-DL (0), all-UL (1) and one mixed
// format (28); further entries come from the scenario.
class SlotFormatTable {
 public:
  static SlotFormatTable builtin() {
    SlotFormatTable t;
    t.entries_.emplace(0, SlotFormat::parse("DDDDDDDDDDDDDD"));
    t.entries_.emplace(1, SlotFormat::parse("UUUUUUUUUUUUUU"));
    t.entries_.emplace(28, SlotFormat::parse("DDDDDDDDDDDDXU"));
    return t;
  }

  void add(int index, SlotFormat format) {
    if (index < 0 || index > 255) throw InvalidArgument("slot format index out of range 0..255");
    entries_.insert_or_assign(index, std::move(format));
  }

  const SlotFormat& at(int index) const {
    auto it = entries_.find(index);
    if (it == entries_.end()) throw InvalidArgument("no slot format with index " + std::to_string(index));
    return it->second;
  }

  bool contains(int index) const { return entries_.count(index) > 0; }
  const std::map<int, SlotFormat>& entries() const { return entries_; }
  friend bool operator==(const SlotFormatTable&, const SlotFormatTable&) = default;

 private:
  std::map<int, SlotFormat> entries_;
};

class MiniSlot {
 public:
  MiniSlot(int symbol_count, int start_symbol) : symbol_count_(symbol_count), start_symbol_(start_symbol) {
    if (symbol_count != 7 && symbol_count != 4 && symbol_count != 2) {
      throw InvalidArgument("mini-slot length must be 7, 4 or 2 symbols");
    }
    if (start_symbol < 0 || start_symbol + symbol_count > kSymbolsPerSlot) {
      throw InvalidArgument("mini-slot does not fit inside the 14-symbol slot");
    }
  }
  int symbol_count() const { return symbol_count_; }
  int start_symbol() const { return start_symbol_; }
  Rational duration(Numerology n) const { return symbol_duration(n) * Rational{symbol_count_}; }

 private:
  int symbol_count_;
  int start_symbol_;
};

enum class CyclicPrefix { Normal, Extended };

inline std::string_view to_string(CyclicPrefix cp) { return cp == CyclicPrefix::Normal ? "normal" : "extended"; }

// PRB ranges are expressed on the carrier's common resource grid.
struct BandwidthPart {
  std::string name;
  int scs_khz = 15;
  CyclicPrefix cp = CyclicPrefix::Normal;
  int start_prb = 0;
  int size_prb = 1;
  int coreset_id = 0;
  int frequency_location = 0;

  int end_prb() const { return start_prb + size_prb; }
  friend bool operator==(const BandwidthPart&, const BandwidthPart&) = default;
};

struct BwpOverlap {
  std::size_t first;
  std::size_t second;
  int start_prb;  // overlap is [start_prb, end_prb)
  int end_prb;
};

struct ValidationReport {
  std::vector<BwpOverlap> overlaps;
  std::vector<std::size_t> out_of_range;
  std::vector<std::size_t> bad_numerology;

  bool valid() const { return overlaps.empty() && out_of_range.empty() && bad_numerology.empty(); }

  std::string describe(std::span<const BandwidthPart> parts) const {
    std::string out;
    auto label = [&](std::size_t i) {
      return parts[i].name.empty() ? "bwp#" + std::to_string(i) : parts[i].name;
    };
    for (const auto& o : overlaps) {
      if (!out.empty()) out += "; ";
      out += "bandwidth parts " + label(o.first) + " and " + label(o.second) + " overlap on PRBs [" +
             std::to_string(o.start_prb) + "," + std::to_string(o.end_prb) + ")";
    }
    for (auto i : out_of_range) {
      if (!out.empty()) out += "; ";
      out += "bandwidth part " + label(i) + " lies outside the carrier";
    }
    for (auto i : bad_numerology) {
      if (!out.empty()) out += "; ";
      out += "bandwidth part " + label(i) + " has unsupported subcarrier spacing " +
             std::to_string(parts[i].scs_khz) + " kHz";
    }
    return out;
  }
};

// Parts with different numerologies may share a carrier; only PRB ranges
// must be disjoint and inside [0, carrier_bw_prb).
inline ValidationReport validate_bwp_partition(int carrier_bw_prb, std::span<const BandwidthPart> parts) {
  if (carrier_bw_prb <= 0) throw InvalidArgument("carrier bandwidth must be positive");
  ValidationReport report;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto& p = parts[i];
    if (p.size_prb <= 0 || p.start_prb < 0 || p.end_prb() > carrier_bw_prb) report.out_of_range.push_back(i);
    if (!numerology_for_scs(p.scs_khz)) report.bad_numerology.push_back(i);
  }
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (std::size_t j = i + 1; j < parts.size(); ++j) {
      const int lo = std::max(parts[i].start_prb, parts[j].start_prb);
      const int hi = std::min(parts[i].end_prb(), parts[j].end_prb());
      if (lo < hi) report.overlaps.push_back({i, j, lo, hi});
    }
  }
  return report;
}

// Scheduling granularity of the radio interface.
class TtiConfig {
 public:
  static constexpr std::array<Duration, 4> kSupported{125us, 250us, 500us, 1ms};

  constexpr TtiConfig() = default;

  static TtiConfig from_duration(Duration d) {
    for (auto s : kSupported) {
      if (s == d) return TtiConfig{d};
    }
    throw InvalidArgument("unsupported TTI " + std::to_string(d.count()) + " ns (use 125us, 250us, 500us or 1ms)");
  }

  constexpr Duration duration() const { return duration_; }
  friend constexpr bool operator==(const TtiConfig&, const TtiConfig&) = default;

 private:
  constexpr explicit TtiConfig(Duration d) : duration_(d) {}
  Duration duration_ = 1ms;
};

// Smallest TTI boundary at or after `now`.
constexpr SimTime next_tx_opportunity(SimTime now, TtiConfig tti) {
  const std::int64_t step = tti.duration().count();
  const std::int64_t t = to_ns(now);
  const std::int64_t rem = t % step;
  return rem == 0 ? now : at_ns(t - rem + step);
}

}  // namespace fabsim::nr
