#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "fabsim/traffic.hpp"

using namespace fabsim;
using namespace fabsim::traffic;
using namespace std::chrono_literals;

namespace {

TrafficProfile periodic(double rate_hz, Duration phase = {}) {
  TrafficProfile p;
  p.name = "p";
  p.payload_bytes = 60;
  p.rate_hz = rate_hz;
  p.phase = phase;
  return p;
}

// Number of k >= 0 with k / (num / den) <= seconds, i.e. k * den <= seconds * num.
std::int64_t closed_form_count(std::int64_t rate_num, std::int64_t rate_den, std::int64_t seconds) {
  return seconds * rate_num / rate_den + 1;
}

}  // namespace

TEST(Catalog, MeasuredRows) {
  const auto rows = measured_rows();
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0].source, "Hilscher");
  EXPECT_EQ(rows[0].destination, "PhoenixC");
  EXPECT_EQ(rows[0].protocol, "PNIO");
  EXPECT_EQ(rows[0].payload_bytes, 60);
  EXPECT_EQ(rows[0].rate_hz, 246.19);
  EXPECT_EQ(rows[0].cls, StreamClass::SafetyRelevant);
  EXPECT_EQ(rows[3].source, "PhoenixC");
  EXPECT_EQ(rows[3].payload_bytes, 64);
  EXPECT_EQ(rows[3].cls, StreamClass::SafetyRelevant);
  int safety = 0;
  for (const auto& r : rows) safety += r.cls == StreamClass::SafetyRelevant;
  EXPECT_EQ(safety, 2);
}

TEST(Catalog, SafetyPairBitrate) {
  const auto rows = measured_rows();
  EXPECT_NEAR(rows[0].nominal_bitrate() + rows[3].nominal_bitrate(), 246.19 * (60 + 64) * 8, 1e-9);
  EXPECT_NEAR(rows[0].nominal_bitrate() + rows[3].nominal_bitrate(), 0.2442e6, 0.0001e6);
}

TEST(Catalog, CamerasFillResidualToTotal) {
  const auto cat = measured_catalog();
  ASSERT_EQ(cat.size(), 9u);
  double total = 0.0, measured = 0.0;
  for (const auto& p : cat) total += p.nominal_bitrate();
  for (const auto& p : measured_rows()) measured += p.nominal_bitrate();
  EXPECT_NEAR(total, 5.97e6, 1e-3);
  double cameras = 0.0;
  for (std::size_t i = 6; i < cat.size(); ++i) {
    EXPECT_EQ(cat[i].cls, StreamClass::NonSafetyRelevant);
    cameras += cat[i].nominal_bitrate();
  }
  EXPECT_NEAR(cameras, 5.97e6 - measured, 1e-3);
}

TEST(Catalog, RejectsBadCameraOptions) {
  CameraOptions c;
  c.total_bps = 1e5;
  EXPECT_THROW(measured_catalog(c), InvalidArgument);
  c = CameraOptions{};
  c.forward_share = 0.5;
  EXPECT_THROW(measured_catalog(c), InvalidArgument);
}

TEST(Generate, BoundaryCounts) {
  EXPECT_EQ(generate(periodic(246.19), SimTime{1s}, RngStream{1, "g"}).size(), 247u);
  EXPECT_EQ(generate(periodic(0.17), SimTime{10s}, RngStream{1, "g"}).size(), 2u);
  EXPECT_EQ(generate(periodic(1.0), SimTime{}, RngStream{1, "g"}).size(), 1u);
  EXPECT_EQ(generate(periodic(1.0, 1ms), SimTime{}, RngStream{1, "g"}).size(), 0u);
}

TEST(Generate, EngineFiresClosedFormCountOverTenSeconds) {
  Engine engine;
  PacketGenerator gen{periodic(246.19), RngStream{1, "g"}};
  const SimTime horizon{10s};
  std::function<void()> arm = [&] {
    if (auto t = gen.next(horizon)) engine.schedule(*t, "traffic", arm);
  };
  arm();
  const auto summary = engine.run_until(horizon);
  EXPECT_EQ(static_cast<std::int64_t>(summary.total_events), closed_form_count(24619, 100, 10));
  EXPECT_EQ(summary.total_events, 2462u);
}

TEST(Generate, PeriodicCountWithinOneOfRateTimesHorizon) {
  for (double rate : {0.17, 0.51, 1.36, 4.94, 246.19, 1000.0}) {
    for (auto h : {1s, 7s, 60s}) {
      const auto n = static_cast<double>(generate(periodic(rate), SimTime{h}, RngStream{1, "g"}).size());
      EXPECT_LE(std::abs(n - rate * to_seconds(h)), 1.0) << rate << " Hz over " << h.count() << " s";
    }
  }
}

TEST(Generate, PeriodicInstantsDoNotDrift) {
  const auto t = generate(periodic(246.19), SimTime{60s}, RngStream{1, "g"});
  const auto k = static_cast<std::int64_t>(t.size() - 1);
  EXPECT_EQ(to_ns(t.back()), std::llround(static_cast<double>(k) * 1e9 / 246.19));
}

TEST(Generate, PoissonMeanRate) {
  auto p = periodic(100.0);
  p.pattern = Pattern::Poisson;
  const auto t = generate(p, SimTime{100s}, RngStream{9, "traffic/poisson"});
  // Poisson count over 100 s at 100 Hz: mean 1e4, sd 100.
  EXPECT_NEAR(static_cast<double>(t.size()), 1e4, 500.0);
  for (std::size_t i = 1; i < t.size(); ++i) ASSERT_GE(t[i], t[i - 1]);
  EXPECT_EQ(t, generate(p, SimTime{100s}, RngStream{9, "traffic/poisson"}));
}

TEST(Generate, RejectsInvalidProfile) {
  auto p = periodic(0.0);
  EXPECT_THROW(generate(p, SimTime{1s}, RngStream{1, "g"}), InvalidArgument);
  p = periodic(1.0);
  p.payload_bytes = 0;
  EXPECT_THROW(generate(p, SimTime{1s}, RngStream{1, "g"}), InvalidArgument);
}

TEST(AggregateRate, UnitArithmetic) {
  EXPECT_EQ(aggregate_rate({}, 1s), 0.0);
  PacketRecord r;
  r.size_bytes = 60;
  r.created_at = SimTime{100ms};
  const std::vector<PacketRecord> one{r};
  EXPECT_EQ(aggregate_rate(one, 1s), 480.0);
  EXPECT_EQ(aggregate_rate(one, 1s, SimTime{200ms}), 0.0);
  EXPECT_THROW(aggregate_rate(one, Duration::zero()), InvalidArgument);
}

TEST(ObservedFrequency, SpanEstimator) {
  const auto t = generate(periodic(4.94), SimTime{60s}, RngStream{1, "g"});
  EXPECT_NEAR(observed_frequency(t), 4.94, 4.94 * 1e-6);
  const std::vector<SimTime> single{SimTime{}};
  EXPECT_EQ(observed_frequency(single), 0.0);
}

TEST(StreamClass, RoundTripNames) {
  for (auto c : {StreamClass::SafetyRelevant, StreamClass::NonSafetyRelevant, StreamClass::NetworkOrganization}) {
    EXPECT_EQ(parse_stream_class(to_string(c)), c);
  }
  EXPECT_THROW(parse_stream_class("bulk"), InvalidArgument);
}
