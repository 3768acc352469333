#include <gtest/gtest.h>

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "fabsim/compliance.hpp"

using namespace fabsim;
using namespace fabsim::compliance;
using namespace std::chrono_literals;
using traffic::PacketRecord;
using traffic::StreamClass;

namespace {

PacketRecord rec(std::int64_t seq, std::int64_t size, Duration created, std::optional<Duration> delivered) {
  PacketRecord r;
  r.stream = "s";
  r.seq = seq;
  r.size_bytes = size;
  r.created_at = SimTime{created};
  r.sent_at = SimTime{created};
  if (delivered) {
    r.delivered_at = SimTime{*delivered};
    r.status = PacketRecord::Status::Delivered;
  } else {
    r.status = PacketRecord::Status::Lost;
  }
  return r;
}

const VerdictRow& row(const std::vector<VerdictRow>& rows, const std::string& dim) {
  auto it = std::find_if(rows.begin(), rows.end(), [&](const VerdictRow& r) { return r.dimension == dim; });
  if (it == rows.end()) throw std::runtime_error("missing row " + dim);
  return *it;
}

StreamMetrics safety_like() {
  StreamMetrics m;
  m.stream = "pnio";
  m.cls = StreamClass::SafetyRelevant;
  m.generated = m.delivered = m.sample_count = 1000;
  m.latency = {1ms, 2ms, 2ms, 1ms, 3ms};
  m.jitter = 1ms;
  m.sizes = SizeRange{60, 64};
  m.max_transfer_interval = 4ms;
  m.max_delivery_gap = 5ms;
  m.availability_windows = 5000;
  m.availability = 1.0;
  return m;
}

}  // namespace

TEST(Profiles, Aspect1And2Values) {
  const auto a1 = find_profile("Aspect1");
  EXPECT_EQ(*a1.latency_target, 12ms);
  EXPECT_EQ(*a1.survival_time, 12ms);
  EXPECT_EQ(*a1.transfer_interval_max, 12ms);
  EXPECT_EQ(a1.message_size_range, (SizeRange{40, 250}));
  EXPECT_EQ(a1.service_area, (Area{200.0, 300.0}));
  EXPECT_FALSE(a1.service_data_rate_min.has_value());
  const auto a2 = find_profile("Aspect2");
  EXPECT_EQ(*a2.service_data_rate_min, 5e6);
  EXPECT_FALSE(a2.message_size_range.has_value());
  EXPECT_FALSE(a2.survival_time.has_value());
  EXPECT_FALSE(a2.service_area.has_value());
  EXPECT_EQ(builtin_profiles().size(), 2u);
  EXPECT_THROW(find_profile("Aspect3"), UnknownProfile);
}

TEST(Percentile, NearestRankAgainstDirectIndex) {
  RngStream rng{11, "percentile"};
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.next_u64() % 3000;
    std::vector<Duration> v(n);
    for (auto& d : v) d = Duration{static_cast<std::int64_t>(rng.next_u64() % 1'000'000)};
    std::sort(v.begin(), v.end());
    for (double p : {0.5, 0.99, 0.999}) {
      // Smallest value with at least p * n samples at or below it.
      std::size_t k = 0;
      while (static_cast<double>(k + 1) < p * static_cast<double>(n) - 1e-9) ++k;
      ASSERT_EQ(percentile(v, p), v[k]) << "n=" << n << " p=" << p;
    }
  }
  EXPECT_THROW(percentile(std::vector<Duration>{}, 0.5), InvalidArgument);
}

TEST(Metrics, CountsRatesAndLatency) {
  const std::vector<PacketRecord> rs{rec(0, 60, 0ms, 1ms), rec(1, 64, 4ms, 6ms), rec(2, 60, 8ms, std::nullopt),
                                     rec(3, 60, 12ms, 13ms)};
  MetricsOptions opt;
  opt.observation_end = SimTime{1s};
  const auto m = compute_metrics("s", StreamClass::SafetyRelevant, rs, opt);
  EXPECT_EQ(m.generated, 4);
  EXPECT_EQ(m.delivered, 3);
  EXPECT_EQ(m.lost, 1);
  EXPECT_EQ(m.sample_count, 3);
  EXPECT_EQ(m.latency.min, 1ms);
  EXPECT_EQ(m.latency.max, 2ms);
  EXPECT_EQ(m.latency.p50, 1ms);
  EXPECT_EQ(m.jitter, 1ms);
  EXPECT_EQ(m.sizes, (SizeRange{60, 64}));
  EXPECT_DOUBLE_EQ(m.offered_rate, (60 + 64 + 60 + 60) * 8.0);
  EXPECT_DOUBLE_EQ(m.observed_rate, (60 + 64 + 60) * 8.0);
  EXPECT_EQ(m.max_transfer_interval, 4ms);
  EXPECT_EQ(m.max_delivery_gap, 7ms);
  // 83 complete 12 ms windows in 1 s; deliveries fall into windows 0 and 1 only.
  EXPECT_EQ(m.availability_windows, 83);
  EXPECT_DOUBLE_EQ(m.availability, 2.0 / 83.0);
}

TEST(Metrics, JitterModes) {
  std::vector<PacketRecord> rs;
  for (int i = 0; i < 100; ++i) rs.push_back(rec(i, 60, Duration{i * 1'000'000}, Duration{i * 1'000'000 + 1'000'000}));
  rs.back().delivered_at = SimTime{rs.back().created_at + 9ms};
  MetricsOptions opt;
  opt.observation_end = SimTime{1s};
  EXPECT_EQ(compute_metrics("s", {}, rs, opt).jitter, Duration::zero());
  opt.jitter = JitterMode::MaxMinusMin;
  EXPECT_EQ(compute_metrics("s", {}, rs, opt).jitter, 8ms);
  EXPECT_EQ(parse_jitter_mode("max-min"), JitterMode::MaxMinusMin);
  EXPECT_THROW(parse_jitter_mode("iqr"), InvalidArgument);
}

TEST(Evaluate, SafetyStreamPassesAspect1) {
  const auto p = find_profile("Aspect1");
  const auto rows = evaluate(safety_like(), p, Area{20.0, 20.0});
  EXPECT_EQ(rows.size(), p.dimension_count());
  for (const auto& r : rows) {
    if (r.dimension == "availability") {
      EXPECT_EQ(r.verdict, Verdict::NotAssessed);
    } else {
      EXPECT_EQ(r.verdict, Verdict::Pass) << r.dimension;
    }
  }
  EXPECT_EQ(row(rows, "message_size").observed, "60-64 B");
}

TEST(Evaluate, AvailabilityNeedsEnoughWindows) {
  auto m = safety_like();
  const auto p = find_profile("Aspect1");
  EXPECT_DOUBLE_EQ(availability_sample_floor(p.availability_min), 1e7);
  m.availability_windows = 10'000'000;
  EXPECT_EQ(row(evaluate(m, p, {}), "availability").verdict, Verdict::Pass);
  m.availability = 0.99;
  EXPECT_EQ(row(evaluate(m, p, {}), "availability").verdict, Verdict::Fail);
}

TEST(Evaluate, FailsOutsideBounds) {
  auto m = safety_like();
  m.latency.p999 = 12ms;  // target is strict
  m.sizes = SizeRange{60, 1400};
  m.max_delivery_gap = 13ms;
  const auto rows = evaluate(m, find_profile("Aspect1"), Area{250.0, 250.0});
  EXPECT_EQ(row(rows, "latency").verdict, Verdict::Fail);
  EXPECT_EQ(row(rows, "message_size").verdict, Verdict::Fail);
  EXPECT_EQ(row(rows, "survival_time").verdict, Verdict::Fail);
  EXPECT_EQ(row(rows, "service_area").verdict, Verdict::Fail);
}

TEST(Evaluate, AreaFitsEitherOrientation) {
  EXPECT_TRUE((Area{300.0, 200.0}).fits_in(Area{200.0, 300.0}));
  EXPECT_TRUE((Area{20.0, 20.0}).fits_in(Area{200.0, 300.0}));
  EXPECT_FALSE((Area{301.0, 10.0}).fits_in(Area{200.0, 300.0}));
}

TEST(Evaluate, EmptyMetricsAreNotAssessed) {
  const StreamMetrics empty;
  for (const auto& p : builtin_profiles()) {
    const auto rows = evaluate(empty, p, Area{20.0, 20.0});
    EXPECT_EQ(rows.size(), p.dimension_count());
    for (const auto& r : rows) {
      if (r.dimension == "service_area") continue;
      EXPECT_EQ(r.verdict, Verdict::NotAssessed) << p.name << " " << r.dimension;
    }
  }
}

TEST(Evaluate, AggregateRateAgainstAspect2) {
  StreamMetrics agg;
  agg.stream = std::string(kAggregate);
  agg.generated = agg.delivered = agg.sample_count = 10;
  agg.observed_rate = 5.97e6;
  agg.latency = {2ms, 2ms, 2ms, 1ms, 2ms};
  agg.jitter = 1ms;
  agg.sizes = SizeRange{60, 1400};
  const auto rows = evaluate(agg, find_profile("Aspect2"), {});
  EXPECT_EQ(row(rows, "service_data_rate").verdict, Verdict::Pass);
  EXPECT_EQ(row(rows, "service_data_rate").observed, "5.9700 Mbit/s");
  // The same traffic presented to Aspect1: camera frames exceed its size range.
  EXPECT_EQ(row(evaluate(agg, find_profile("Aspect1"), {}), "message_size").verdict, Verdict::Fail);
  agg.observed_rate = 4.9e6;
  EXPECT_EQ(row(evaluate(agg, find_profile("Aspect2"), {}), "service_data_rate").verdict, Verdict::Fail);
}

TEST(Assess, DefaultPairingAndSelection) {
  auto s1 = safety_like();
  auto cam = safety_like();
  cam.stream = "cam";
  cam.cls = StreamClass::NonSafetyRelevant;
  StreamMetrics agg = safety_like();
  agg.stream = std::string(kAggregate);
  agg.cls.reset();
  const std::vector<StreamMetrics> streams{s1, cam};

  auto r = assess(streams, agg, {}, JitterMode::P99MinusMin);
  ASSERT_EQ(r.entries.size(), 2u);
  EXPECT_EQ(r.entries[0].stream, "pnio");
  EXPECT_EQ(r.entries[0].profile, "Aspect1");
  EXPECT_EQ(r.entries[1].stream, "aggregate");
  EXPECT_EQ(r.entries[1].profile, "Aspect2");

  r = assess(streams, agg, {}, JitterMode::P99MinusMin, {"Aspect2", "cam", {}});
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_EQ(r.entries[0].stream, "cam");
  EXPECT_EQ(r.entries[0].profile, "Aspect2");

  r = assess(streams, agg, {}, JitterMode::P99MinusMin, {{}, {}, StreamClass::NonSafetyRelevant});
  ASSERT_EQ(r.entries.size(), 1u);
  EXPECT_EQ(r.entries[0].stream, "cam");

  EXPECT_THROW(assess(streams, agg, {}, JitterMode::P99MinusMin, {{}, "nope", {}}), InvalidArgument);
  EXPECT_THROW(assess(streams, agg, {}, JitterMode::P99MinusMin, {"Aspect9", {}, {}}), UnknownProfile);
}

TEST(Report, TableAndCounts) {
  ComplianceReport r;
  r.entries.push_back({"pnio", "Aspect1", evaluate(safety_like(), find_profile("Aspect1"), Area{20.0, 20.0})});
  EXPECT_EQ(r.count(Verdict::Pass), 6u);
  EXPECT_EQ(r.count(Verdict::NotAssessed), 1u);
  EXPECT_FALSE(r.any_fail());
  const auto t = r.table();
  EXPECT_NE(t.find("pnio vs Aspect1"), std::string::npos);
  EXPECT_NE(t.find("p99 - min"), std::string::npos);
  EXPECT_NE(t.find("Pass 6, Fail 0, NotAssessed 1"), std::string::npos);
}
