#pragma once

// Scores per-stream run metrics against the use-case requirement aspects.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fabsim/errors.hpp"
#include "fabsim/sim_core.hpp"
#include "fabsim/traffic.hpp"

namespace fabsim::compliance {

using namespace std::chrono_literals;

struct Area {
  double width_m = 0.0;
  double depth_m = 0.0;

  // Either orientation may be used.
  bool fits_in(const Area& bound) const {
    return (width_m <= bound.width_m && depth_m <= bound.depth_m) ||
           (width_m <= bound.depth_m && depth_m <= bound.width_m);
  }
  friend bool operator==(const Area&, const Area&) = default;
};

struct SizeRange {
  std::int64_t min_bytes = 0;
  std::int64_t max_bytes = 0;
  friend bool operator==(const SizeRange&, const SizeRange&) = default;
};

struct RequirementProfile {
  std::string name;
  std::string description;
  double availability_min = 0.0;
  double availability_max = 1.0;
  std::optional<Duration> latency_target;
  std::optional<Duration> jitter_max;
  std::optional<double> service_data_rate_min;  // bit/s
  std::optional<SizeRange> message_size_range;
  std::optional<Duration> transfer_interval_max;
  std::optional<Duration> survival_time;
  std::optional<Area> service_area;

  std::size_t dimension_count() const {
    return 1 + latency_target.has_value() + jitter_max.has_value() + service_data_rate_min.has_value() +
           message_size_range.has_value() + transfer_interval_max.has_value() + survival_time.has_value() +
           service_area.has_value();
  }
};

inline std::vector<RequirementProfile> builtin_profiles() {
  RequirementProfile a1;
  a1.name = "Aspect1";
  a1.description = "cyclic safety-class control traffic";
  a1.availability_min = 0.999999;
  a1.availability_max = 0.99999999;
  a1.latency_target = 12ms;
  a1.jitter_max = 6ms;
  a1.message_size_range = SizeRange{40, 250};
  a1.transfer_interval_max = 12ms;
  a1.survival_time = 12ms;
  a1.service_area = Area{200.0, 300.0};

  RequirementProfile a2;
  a2.name = "Aspect2";
  a2.description = "bulk video and telepresence traffic";
  a2.availability_min = 0.999999;
  a2.availability_max = 0.99999999;
  a2.latency_target = 30ms;
  a2.jitter_max = 15ms;
  a2.service_data_rate_min = 5e6;
  return {a1, a2};
}

inline RequirementProfile find_profile(const std::string& name) {
  for (auto& p : builtin_profiles()) {
    if (p.name == name) return p;
  }
  throw UnknownProfile("unknown requirement profile '" + name + "' (Aspect1, Aspect2)");
}

enum class JitterMode { P99MinusMin, MaxMinusMin };

inline std::string_view to_string(JitterMode m) { return m == JitterMode::P99MinusMin ? "p99-min" : "max-min"; }

inline JitterMode parse_jitter_mode(std::string_view s) {
  if (s == "p99-min") return JitterMode::P99MinusMin;
  if (s == "max-min") return JitterMode::MaxMinusMin;
  throw InvalidArgument("unknown jitter mode '" + std::string(s) + "' (p99-min, max-min)");
}

struct LatencyStats {
  Duration p50{}, p99{}, p999{}, min{}, max{};
  friend bool operator==(const LatencyStats&, const LatencyStats&) = default;
};

struct StreamMetrics {
  std::string stream;
  std::optional<traffic::StreamClass> cls;  // absent for the aggregate
  std::int64_t generated = 0;
  std::int64_t delivered = 0;
  std::int64_t lost = 0;
  std::int64_t in_flight = 0;
  std::int64_t sample_count = 0;  // latency samples (deliveries)
  LatencyStats latency;
  Duration jitter{};
  double offered_rate = 0.0;   // bits created per second of observation
  double observed_rate = 0.0;  // bits delivered per second of observation
  std::optional<SizeRange> sizes;
  Duration max_transfer_interval{};  // largest gap between consecutive creations
  Duration max_delivery_gap{};       // largest gap without a delivery
  Duration availability_window{};
  std::int64_t availability_windows = 0;
  double availability = 0.0;  // fraction of windows with at least one delivery

  friend bool operator==(const StreamMetrics&, const StreamMetrics&) = default;
};

// Nearest-rank percentile over sorted samples.
inline Duration percentile(std::span<const Duration> sorted, double p) {
  if (sorted.empty()) throw InvalidArgument("percentile of an empty sample");
  const auto n = static_cast<double>(sorted.size());
  auto rank = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

struct MetricsOptions {
  SimTime observation_end{};  // usually the horizon
  Duration availability_window = 12ms;
  JitterMode jitter = JitterMode::P99MinusMin;
};

// Metrics for one set of records observed over [0, observation_end].
inline StreamMetrics compute_metrics(std::string name, std::optional<traffic::StreamClass> cls,
                                     std::span<const traffic::PacketRecord> records, const MetricsOptions& opt) {
  using traffic::PacketRecord;
  if (opt.availability_window <= Duration::zero()) throw InvalidArgument("availability window must be positive");
  StreamMetrics m;
  m.stream = std::move(name);
  m.cls = cls;
  m.availability_window = opt.availability_window;

  std::vector<Duration> lat;
  std::vector<SimTime> created;
  std::vector<SimTime> deliveries;
  double bits_created = 0.0;
  double bits_delivered = 0.0;
  for (const auto& r : records) {
    ++m.generated;
    created.push_back(r.created_at);
    const double bits = static_cast<double>(r.size_bytes) * 8.0;
    bits_created += bits;
    if (!m.sizes) {
      m.sizes = SizeRange{r.size_bytes, r.size_bytes};
    } else {
      m.sizes->min_bytes = std::min(m.sizes->min_bytes, r.size_bytes);
      m.sizes->max_bytes = std::max(m.sizes->max_bytes, r.size_bytes);
    }
    switch (r.status) {
      case PacketRecord::Status::Delivered:
        ++m.delivered;
        bits_delivered += bits;
        lat.push_back(*r.delivered_at - r.created_at);
        deliveries.push_back(*r.delivered_at);
        break;
      case PacketRecord::Status::Lost: ++m.lost; break;
      case PacketRecord::Status::InFlight: ++m.in_flight; break;
    }
  }
  m.sample_count = static_cast<std::int64_t>(lat.size());
  const double span_s = to_seconds(opt.observation_end.time_since_epoch());
  if (span_s > 0.0) {
    m.offered_rate = bits_created / span_s;
    m.observed_rate = bits_delivered / span_s;
  }
  if (!lat.empty()) {
    std::sort(lat.begin(), lat.end());
    m.latency = {percentile(lat, 0.50), percentile(lat, 0.99), percentile(lat, 0.999), lat.front(), lat.back()};
    m.jitter = (opt.jitter == JitterMode::P99MinusMin ? m.latency.p99 : m.latency.max) - m.latency.min;
  }

  std::sort(created.begin(), created.end());
  for (std::size_t i = 1; i < created.size(); ++i) {
    m.max_transfer_interval = std::max(m.max_transfer_interval, created[i] - created[i - 1]);
  }

  std::sort(deliveries.begin(), deliveries.end());
  for (std::size_t i = 1; i < deliveries.size(); ++i) {
    m.max_delivery_gap = std::max(m.max_delivery_gap, deliveries[i] - deliveries[i - 1]);
  }

  // Consecutive windows from the first creation; only complete windows count.
  if (!created.empty()) {
    const SimTime start = created.front();
    const Duration W = opt.availability_window;
    const std::int64_t n = (opt.observation_end - start) / W;
    if (n > 0) {
      std::vector<char> hit(static_cast<std::size_t>(n), 0);
      for (SimTime d : deliveries) {
        if (d < start) continue;
        const std::int64_t i = (d - start) / W;
        if (i < n) hit[static_cast<std::size_t>(i)] = 1;
      }
      m.availability_windows = n;
      m.availability = static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(n);
    }
  }
  return m;
}

enum class Verdict { Pass, Fail, NotAssessed };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "Pass";
    case Verdict::Fail: return "Fail";
    case Verdict::NotAssessed: return "NotAssessed";
  }
  return "?";
}

struct VerdictRow {
  std::string dimension;
  std::string required;
  std::string observed;
  Verdict verdict = Verdict::NotAssessed;
  std::string note;
};

inline std::string format_ms(Duration d) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3f ms", static_cast<double>(d.count()) / 1e6);
  return buf;
}

inline std::string format_rate(double bps) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4f Mbit/s", bps / 1e6);
  return buf;
}

inline std::string format_fraction(double f) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.8f", f);
  return buf;
}

inline std::string format_area(const Area& a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g m x %g m", a.width_m, a.depth_m);
  return buf;
}

// Smallest window count that can support the availability claim.
inline double availability_sample_floor(double availability_min) {
  if (availability_min >= 1.0) return INFINITY;
  const double n = 10.0 / (1.0 - availability_min);
  return std::ceil(n - n * 1e-12);
}

// One row per present dimension of `profile`.
inline std::vector<VerdictRow> evaluate(const StreamMetrics& m, const RequirementProfile& p, const Area& area) {
  std::vector<VerdictRow> rows;
  auto pf = [](bool ok) { return ok ? Verdict::Pass : Verdict::Fail; };

  {
    VerdictRow r{"availability", ">= " + format_fraction(p.availability_min) + " (up to " +
                                     format_fraction(p.availability_max) + ")",
                 format_fraction(m.availability), Verdict::NotAssessed, {}};
    const double floor = availability_sample_floor(p.availability_min);
    if (static_cast<double>(m.availability_windows) < floor) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%lld windows of %s, at least %.0f needed", static_cast<long long>(m.availability_windows),
                    format_ms(m.availability_window).c_str(), std::ceil(floor));
      r.note = buf;
    } else {
      r.verdict = pf(m.availability >= p.availability_min);
    }
    rows.push_back(std::move(r));
  }
  const bool have_latency = m.sample_count > 0;
  if (p.latency_target) {
    VerdictRow r{"latency", "p99.9 < " + format_ms(*p.latency_target), "-", Verdict::NotAssessed, {}};
    if (have_latency) {
      r.observed = format_ms(m.latency.p999);
      r.verdict = pf(m.latency.p999 < *p.latency_target);
    } else {
      r.note = "no delivered samples";
    }
    rows.push_back(std::move(r));
  }
  if (p.jitter_max) {
    VerdictRow r{"jitter", "< " + format_ms(*p.jitter_max), "-", Verdict::NotAssessed, {}};
    if (have_latency) {
      r.observed = format_ms(m.jitter);
      r.verdict = pf(m.jitter < *p.jitter_max);
    } else {
      r.note = "no delivered samples";
    }
    rows.push_back(std::move(r));
  }
  if (p.service_data_rate_min) {
    VerdictRow r{"service_data_rate", "> " + format_rate(*p.service_data_rate_min), format_rate(m.observed_rate),
                 Verdict::NotAssessed, {}};
    if (m.generated > 0) {
      r.verdict = pf(m.observed_rate > *p.service_data_rate_min);
    } else {
      r.note = "no packets";
    }
    rows.push_back(std::move(r));
  }
  if (p.message_size_range) {
    const auto& b = *p.message_size_range;
    VerdictRow r{"message_size", std::to_string(b.min_bytes) + "-" + std::to_string(b.max_bytes) + " B", "-",
                 Verdict::NotAssessed, {}};
    if (m.sizes) {
      r.observed = std::to_string(m.sizes->min_bytes) + "-" + std::to_string(m.sizes->max_bytes) + " B";
      r.verdict = pf(m.sizes->min_bytes >= b.min_bytes && m.sizes->max_bytes <= b.max_bytes);
    } else {
      r.note = "no packets";
    }
    rows.push_back(std::move(r));
  }
  if (p.transfer_interval_max) {
    VerdictRow r{"transfer_interval", "<= " + format_ms(*p.transfer_interval_max), "-", Verdict::NotAssessed, {}};
    if (m.generated > 1) {
      r.observed = format_ms(m.max_transfer_interval);
      r.verdict = pf(m.max_transfer_interval <= *p.transfer_interval_max);
    } else {
      r.note = "fewer than two packets";
    }
    rows.push_back(std::move(r));
  }
  if (p.survival_time) {
    VerdictRow r{"survival_time", "gap <= " + format_ms(*p.survival_time), "-", Verdict::NotAssessed, {}};
    if (m.delivered > 1) {
      r.observed = format_ms(m.max_delivery_gap);
      r.verdict = pf(m.max_delivery_gap <= *p.survival_time);
    } else {
      r.note = "fewer than two deliveries";
    }
    rows.push_back(std::move(r));
  }
  if (p.service_area) {
    rows.push_back({"service_area", "within " + format_area(*p.service_area), format_area(area),
                    pf(area.fits_in(*p.service_area)), {}});
  }
  return rows;
}

struct ReportEntry {
  std::string stream;
  std::string profile;
  std::vector<VerdictRow> rows;
};

struct ComplianceReport {
  JitterMode jitter_mode = JitterMode::P99MinusMin;
  std::vector<ReportEntry> entries;

  std::size_t count(Verdict v) const {
    std::size_t n = 0;
    for (const auto& e : entries) {
      for (const auto& r : e.rows) n += r.verdict == v;
    }
    return n;
  }
  bool any_fail() const { return count(Verdict::Fail) > 0; }

  std::string table() const {
    std::string out = "# jitter = " + std::string(jitter_mode == JitterMode::P99MinusMin ? "p99 - min" : "max - min") +
                      " latency; latency verdict uses p99.9\n";
    for (const auto& e : entries) {
      out += "\n" + e.stream + " vs " + e.profile + "\n";
      std::size_t w0 = 9, w1 = 8, w2 = 8;
      for (const auto& r : e.rows) {
        w0 = std::max(w0, r.dimension.size());
        w1 = std::max(w1, r.required.size());
        w2 = std::max(w2, r.observed.size());
      }
      auto pad = [](std::string s, std::size_t w) {
        s.resize(std::max(s.size(), w), ' ');
        return s;
      };
      out += "  " + pad("dimension", w0) + "  " + pad("required", w1) + "  " + pad("observed", w2) + "  verdict\n";
      for (const auto& r : e.rows) {
        out += "  " + pad(r.dimension, w0) + "  " + pad(r.required, w1) + "  " + pad(r.observed, w2) + "  " +
               std::string(to_string(r.verdict));
        if (!r.note.empty()) out += " (" + r.note + ")";
        out += "\n";
      }
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "\nPass %zu, Fail %zu, NotAssessed %zu\n", count(Verdict::Pass),
                  count(Verdict::Fail), count(Verdict::NotAssessed));
    out += buf;
    return out;
  }
};

// Aspect1 on every safety stream and Aspect2 on the aggregate, unless a
// profile or stream selection narrows it.
struct Selection {
  std::optional<std::string> profile;
  std::optional<std::string> stream;
  std::optional<traffic::StreamClass> cls;
};

inline constexpr std::string_view kAggregate = "aggregate";

inline ComplianceReport assess(std::span<const StreamMetrics> streams, const StreamMetrics& aggregate,
                               const Area& area, JitterMode mode, const Selection& sel = {}) {
  ComplianceReport report;
  report.jitter_mode = mode;
  std::optional<RequirementProfile> forced;
  if (sel.profile) forced = find_profile(*sel.profile);
  const auto a1 = find_profile("Aspect1");
  const auto a2 = find_profile("Aspect2");

  auto add = [&](const StreamMetrics& m, const RequirementProfile& p) {
    report.entries.push_back({m.stream, p.name, evaluate(m, p, area)});
  };
  const bool explicit_selection = sel.stream || sel.cls;
  bool matched = false;
  for (const auto& m : streams) {
    if (sel.stream && m.stream != *sel.stream) continue;
    if (sel.cls && m.cls != sel.cls) continue;
    if (!explicit_selection && m.cls != traffic::StreamClass::SafetyRelevant) continue;
    matched = true;
    add(m, forced ? *forced : a1);
  }
  const bool aggregate_selected = sel.stream ? *sel.stream == kAggregate : !sel.cls;
  if (aggregate_selected) {
    matched = true;
    add(aggregate, forced ? *forced : a2);
  }
  if (sel.stream && !matched) throw InvalidArgument("no stream named '" + *sel.stream + "' in the metrics");
  return report;
}

}  // namespace fabsim::compliance
