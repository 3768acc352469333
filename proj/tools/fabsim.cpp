// fabsim: run scenarios, score metrics, list built-in profiles and streams.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include "fabsim/fabsim.hpp"
#include "fabsim/io/artifacts.hpp"
#include "fabsim/io/config.hpp"

namespace {

using namespace fabsim;

// Exit codes: 0 ok, 1 assessed Fail (check), 2 bad input, 3 I/O failure.
constexpr int kExitFail = 1;
constexpr int kExitInput = 2;
constexpr int kExitIo = 3;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::string horizon;
};

Scenario load(const std::string& config_path, const Overrides& o) {
  Scenario s = config_path.empty() ? Scenario::defaults() : io::load_scenario(config_path);
  if (o.seed) s.seed = *o.seed;
  if (!o.horizon.empty()) {
    try {
      s.horizon = io::parse_duration(o.horizon);
    } catch (const InvalidArgument& e) {
      throw ConfigInvalid("--horizon", e.what());
    }
  }
  return s;
}

int cmd_run(const std::string& config_path, const Overrides& o, const std::string& out_dir,
            const std::string& profile) {
  const Scenario s = load(config_path, o);
  RunResult r = run_scenario(s);
  if (!profile.empty()) {
    r.compliance = compliance::assess(r.metrics, r.aggregate, s.service_area, s.jitter, {profile, {}, {}});
  }
  const auto files = io::write_artifacts(r, out_dir);

  int stops = 0;
  for (const auto& e : r.safety_log) stops += e.transition == "Running->SafeStop";
  std::printf("horizon            %s, seed %llu\n", io::format_duration(s.horizon).c_str(),
              static_cast<unsigned long long>(s.seed));
  std::printf("aggregate rate     %.4f Mbit/s offered, %.4f Mbit/s delivered\n", r.aggregate.offered_rate / 1e6,
              r.aggregate.observed_rate / 1e6);
  std::printf("packets            %lld generated, %lld delivered, %lld lost, %lld in flight\n",
              static_cast<long long>(r.aggregate.generated), static_cast<long long>(r.aggregate.delivered),
              static_cast<long long>(r.aggregate.lost), static_cast<long long>(r.aggregate.in_flight));
  std::printf("products           %zu released, %zu completed\n", r.products.size(), r.products_completed());
  std::printf("safety             %d watchdog trips, %d safe stops\n", r.watchdog_trips, stops);
  std::printf("compliance         Pass %zu, Fail %zu, NotAssessed %zu\n", r.compliance.count(compliance::Verdict::Pass),
              r.compliance.count(compliance::Verdict::Fail), r.compliance.count(compliance::Verdict::NotAssessed));
  for (const auto& v : r.invariant_violations) std::fprintf(stderr, "invariant violated: %s\n", v.c_str());
  for (const auto& f : files) std::printf("wrote              %s\n", f.string().c_str());
  return 0;
}

int cmd_check(const std::string& metrics_path, const std::string& profile, const std::string& stream,
              const std::string& cls) {
  const auto m = io::load_metrics(metrics_path);
  compliance::Selection sel;
  if (!profile.empty()) sel.profile = profile;
  if (!stream.empty()) sel.stream = stream;
  if (!cls.empty()) sel.cls = traffic::parse_stream_class(cls);
  const auto report = compliance::assess(m.streams, m.aggregate, m.service_area, m.jitter, sel);
  std::cout << report.table();
  return report.any_fail() ? kExitFail : 0;
}

std::string opt_ms(const std::optional<Duration>& d) { return d ? compliance::format_ms(*d) : "-"; }

int cmd_profiles() {
  for (const auto& p : compliance::builtin_profiles()) {
    std::printf("%s: %s\n", p.name.c_str(), p.description.c_str());
    std::printf("  availability        %s - %s\n", compliance::format_fraction(p.availability_min).c_str(),
                compliance::format_fraction(p.availability_max).c_str());
    std::printf("  latency target      %s\n", opt_ms(p.latency_target).c_str());
    std::printf("  jitter max          %s\n", opt_ms(p.jitter_max).c_str());
    std::printf("  service data rate   %s\n",
                p.service_data_rate_min ? ("> " + compliance::format_rate(*p.service_data_rate_min)).c_str() : "-");
    std::printf("  message size        %s\n", p.message_size_range ? (std::to_string(p.message_size_range->min_bytes) + "-" +
                                                                      std::to_string(p.message_size_range->max_bytes) + " B")
                                                                         .c_str()
                                                                   : "-");
    std::printf("  transfer interval   %s\n", opt_ms(p.transfer_interval_max).c_str());
    std::printf("  survival time       %s\n", opt_ms(p.survival_time).c_str());
    std::printf("  service area        %s\n", p.service_area ? compliance::format_area(*p.service_area).c_str() : "-");
  }
  return 0;
}

int cmd_catalog(const std::string& cls) {
  std::optional<traffic::StreamClass> filter;
  if (!cls.empty()) filter = traffic::parse_stream_class(cls);
  std::printf("%-24s %-9s %-13s %-8s %-12s %6s %12s %14s\n", "stream", "source", "destination", "protocol", "class",
              "bytes", "rate_hz", "bitrate_bps");
  double total = 0.0;
  for (const auto& p : traffic::measured_catalog()) {
    if (filter && p.cls != *filter) continue;
    total += p.nominal_bitrate();
    std::printf("%-24s %-9s %-13s %-8s %-12s %6lld %12.6g %14.1f\n", p.name.c_str(), p.source.c_str(),
                p.destination.c_str(), p.protocol.c_str(), std::string(traffic::to_string(p.cls)).c_str(),
                static_cast<long long>(p.payload_bytes), p.rate_hz, p.nominal_bitrate());
  }
  std::printf("total nominal bitrate %.1f bit/s\n", total);
  return 0;
}

int cmd_dump(const std::string& config_path, const Overrides& o) {
  std::cout << io::dump_scenario(load(config_path, o));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deterministic simulator of a 5G-connected flexible production line"};
  app.require_subcommand(1);

  Overrides o;
  std::string config, out_dir = "out", profile, metrics, stream, cls;

  auto* run = app.add_subcommand("run", "Run a scenario and write artifacts");
  run->add_option("config", config, "Scenario file (YAML); built-in default scenario when omitted");
  run->add_option("--seed", o.seed, "Override the scenario seed");
  run->add_option("--horizon", o.horizon, "Override the horizon, e.g. 60s");
  run->add_option("--out", out_dir, "Output directory")->capture_default_str();
  run->add_option("--profile", profile, "Score every selected stream against this profile");

  auto* check = app.add_subcommand("check", "Score a metrics file; exit 1 on any Fail");
  check->add_option("metrics", metrics, "metrics.json from a run")->required();
  check->add_option("--profile", profile, "Aspect1 or Aspect2 (default: Aspect1 on safety streams, Aspect2 on aggregate)");
  check->add_option("--stream", stream, "Only this stream ('aggregate' for the aggregate)");
  check->add_option("--class", cls, "Only streams of this class (safety, non-safety, organization)");

  auto* profiles = app.add_subcommand("profiles", "List built-in requirement profiles");

  auto* catalog = app.add_subcommand("catalog", "List the measured traffic catalog");
  catalog->add_option("--class", cls, "Only streams of this class (safety, non-safety, organization)");

  auto* cfg = app.add_subcommand("config", "Scenario file utilities");
  cfg->require_subcommand(1);
  auto* dump = cfg->add_subcommand("dump", "Print the full scenario (defaults filled in)");
  dump->add_option("config", config, "Scenario file; built-in default when omitted");
  dump->add_option("--seed", o.seed, "Override the seed");
  dump->add_option("--horizon", o.horizon, "Override the horizon");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, o, out_dir, profile);
    if (*check) return cmd_check(metrics, profile, stream, cls);
    if (*profiles) return cmd_profiles();
    if (*catalog) return cmd_catalog(cls);
    if (*dump) return cmd_dump(config, o);
  } catch (const ConfigInvalid& e) {
    std::fprintf(stderr, "config invalid: %s\n", e.what());
    return kExitInput;
  } catch (const IoFailure& e) {
    std::fprintf(stderr, "i/o failure: %s\n", e.what());
    return kExitIo;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  }
  return 0;
}
