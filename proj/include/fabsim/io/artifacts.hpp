#pragma once

// Run artifacts. Field names and CSV columns are part of the external
// interface; keep them stable.
//
//   metrics.json     per-stream and aggregate metrics, input to `check`
//   packets.csv      stream,seq,class,size_bytes,created_ns,sent_ns,delivered_ns
//   safety_log.csv   time_ns,loop,transition,cause,consecutive_missed
//   compliance.json  verdict rows per (stream, profile)
//   compliance.txt   the same as a table
//   products.csv     product,time_ns,event,location,step,detail

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fabsim/compliance.hpp"
#include "fabsim/errors.hpp"
#include "fabsim/simulation.hpp"

namespace fabsim::io {

using nlohmann::json;

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline json to_json(const compliance::StreamMetrics& m) {
  json j;
  j["stream"] = m.stream;
  j["class"] = m.cls ? json(std::string(traffic::to_string(*m.cls))) : json(nullptr);
  j["generated"] = m.generated;
  j["delivered"] = m.delivered;
  j["lost"] = m.lost;
  j["in_flight"] = m.in_flight;
  j["sample_count"] = m.sample_count;
  j["latency_ns"] = {{"p50", m.latency.p50.count()},
                     {"p99", m.latency.p99.count()},
                     {"p999", m.latency.p999.count()},
                     {"min", m.latency.min.count()},
                     {"max", m.latency.max.count()}};
  j["jitter_ns"] = m.jitter.count();
  j["offered_rate_bps"] = m.offered_rate;
  j["observed_rate_bps"] = m.observed_rate;
  j["size_bytes"] = m.sizes ? json{{"min", m.sizes->min_bytes}, {"max", m.sizes->max_bytes}} : json(nullptr);
  j["max_transfer_interval_ns"] = m.max_transfer_interval.count();
  j["max_delivery_gap_ns"] = m.max_delivery_gap.count();
  j["availability_window_ns"] = m.availability_window.count();
  j["availability_windows"] = m.availability_windows;
  j["availability"] = m.availability;
  return j;
}

inline compliance::StreamMetrics metrics_from_json(const json& j) {
  compliance::StreamMetrics m;
  m.stream = j.at("stream").get<std::string>();
  if (!j.at("class").is_null()) m.cls = traffic::parse_stream_class(j.at("class").get<std::string>());
  m.generated = j.at("generated").get<std::int64_t>();
  m.delivered = j.at("delivered").get<std::int64_t>();
  m.lost = j.at("lost").get<std::int64_t>();
  m.in_flight = j.at("in_flight").get<std::int64_t>();
  m.sample_count = j.at("sample_count").get<std::int64_t>();
  const auto& l = j.at("latency_ns");
  auto ns = [](const json& v) { return Duration{v.get<std::int64_t>()}; };
  m.latency = {ns(l.at("p50")), ns(l.at("p99")), ns(l.at("p999")), ns(l.at("min")), ns(l.at("max"))};
  m.jitter = ns(j.at("jitter_ns"));
  m.offered_rate = j.at("offered_rate_bps").get<double>();
  m.observed_rate = j.at("observed_rate_bps").get<double>();
  if (!j.at("size_bytes").is_null()) {
    m.sizes = compliance::SizeRange{j["size_bytes"].at("min").get<std::int64_t>(), j["size_bytes"].at("max").get<std::int64_t>()};
  }
  m.max_transfer_interval = ns(j.at("max_transfer_interval_ns"));
  m.max_delivery_gap = ns(j.at("max_delivery_gap_ns"));
  m.availability_window = ns(j.at("availability_window_ns"));
  m.availability_windows = j.at("availability_windows").get<std::int64_t>();
  m.availability = j.at("availability").get<double>();
  return m;
}

// What `check` needs from a previous run.
struct MetricsFile {
  std::vector<compliance::StreamMetrics> streams;
  compliance::StreamMetrics aggregate;
  compliance::Area service_area;
  compliance::JitterMode jitter = compliance::JitterMode::P99MinusMin;
};

inline json metrics_json(const RunResult& r) {
  json j;
  j["seed"] = r.scenario.seed;
  j["horizon_ns"] = r.scenario.horizon.count();
  j["jitter_mode"] = std::string(compliance::to_string(r.scenario.jitter));
  j["service_area"] = {{"width_m", r.scenario.service_area.width_m}, {"depth_m", r.scenario.service_area.depth_m}};
  j["streams"] = json::array();
  for (const auto& m : r.metrics) j["streams"].push_back(to_json(m));
  j["aggregate"] = to_json(r.aggregate);
  json owners = json::object();
  for (const auto& [k, v] : r.summary.events_by_owner) owners[k] = v;
  j["run"] = {{"total_events", r.summary.total_events},
              {"events_by_owner", owners},
              {"products_released", r.products.size()},
              {"products_completed", r.products_completed()},
              {"watchdog_trips", r.watchdog_trips}};
  return j;
}

inline MetricsFile parse_metrics(const std::string& text) {
  try {
    const json j = json::parse(text);
    MetricsFile f;
    for (const auto& s : j.at("streams")) f.streams.push_back(metrics_from_json(s));
    f.aggregate = metrics_from_json(j.at("aggregate"));
    f.service_area = {j.at("service_area").at("width_m").get<double>(), j.at("service_area").at("depth_m").get<double>()};
    f.jitter = compliance::parse_jitter_mode(j.at("jitter_mode").get<std::string>());
    return f;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed metrics file: ") + e.what());
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline MetricsFile load_metrics(const std::string& path) { return parse_metrics(read_file(path)); }

inline json compliance_json(const compliance::ComplianceReport& report) {
  json j;
  j["jitter_definition"] = report.jitter_mode == compliance::JitterMode::P99MinusMin ? "p99 - min latency"
                                                                                       : "max - min latency";
  j["latency_statistic"] = "p99.9";
  j["entries"] = json::array();
  for (const auto& e : report.entries) {
    json rows = json::array();
    for (const auto& r : e.rows) {
      rows.push_back({{"dimension", r.dimension},
                      {"required", r.required},
                      {"observed", r.observed},
                      {"verdict", std::string(compliance::to_string(r.verdict))},
                      {"note", r.note}});
    }
    j["entries"].push_back({{"stream", e.stream}, {"profile", e.profile}, {"rows", rows}});
  }
  j["counts"] = {{"Pass", report.count(compliance::Verdict::Pass)},
                 {"Fail", report.count(compliance::Verdict::Fail)},
                 {"NotAssessed", report.count(compliance::Verdict::NotAssessed)}};
  return j;
}

inline std::string packets_csv(const RunResult& r) {
  std::string out = "stream,seq,class,size_bytes,created_ns,sent_ns,delivered_ns\n";
  for (const auto& p : r.packets) {
    out += csv_field(p.stream) + "," + std::to_string(p.seq) + "," + std::string(traffic::to_string(p.cls)) + "," +
           std::to_string(p.size_bytes) + "," + std::to_string(to_ns(p.created_at)) + "," +
           std::to_string(to_ns(p.sent_at)) + ",";
    switch (p.status) {
      case traffic::PacketRecord::Status::Delivered: out += std::to_string(to_ns(*p.delivered_at)); break;
      case traffic::PacketRecord::Status::Lost: out += "LOST"; break;
      case traffic::PacketRecord::Status::InFlight: out += "INFLIGHT"; break;
    }
    out += "\n";
  }
  return out;
}

inline std::string safety_log_csv(const std::vector<safety::SafetyEvent>& log) {
  std::string out = "time_ns,loop,transition,cause,consecutive_missed\n";
  for (const auto& e : log) {
    out += std::to_string(to_ns(e.time)) + "," + csv_field(e.loop) + "," + csv_field(e.transition) + "," +
           csv_field(e.cause) + "," + std::to_string(e.consecutive_missed) + "\n";
  }
  return out;
}

inline std::string products_csv(const std::vector<factory::ProductTimeline>& products) {
  struct Row {
    SimTime t;
    std::string event, location, step, detail;
  };
  std::string out = "product,time_ns,event,location,step,detail\n";
  for (const auto& p : products) {
    std::vector<Row> rows;
    rows.push_back({p.released_at, "released", p.legs.empty() ? std::string{} : p.legs.front().from, {}, {}});
    for (const auto& l : p.legs) {
      std::string detail = "end_ns=" + std::to_string(to_ns(l.end));
      if (!l.via.empty()) {
        detail += ";via=";
        for (std::size_t i = 0; i < l.via.size(); ++i) detail += (i ? "|" : "") + l.via[i];
      }
      rows.push_back({l.start, l.kind == factory::ProductLeg::Kind::Robot ? "robot_leg" : "conveyor_leg",
                      l.from + "->" + l.to, {}, detail});
    }
    for (const auto& c : p.product.memory.completed_steps()) rows.push_back({c.at, "step", c.station, c.step, {}});
    for (const auto& f : p.product.memory.quality_flags()) {
      std::string detail = std::string(factory::to_string(f.verdict));
      if (f.timeout) detail += ";timeout";
      if (f.rework) detail += ";rework";
      rows.push_back({f.at, f.rework ? "rework" : "verdict", {}, f.step, detail});
    }
    for (const auto& i : p.inspections) {
      rows.push_back({i.captured_at, "inspection", "robot", i.step, "rtt_ns=" + std::to_string(i.cloud_rtt.count())});
    }
    if (p.completed_at) rows.push_back({*p.completed_at, "completed", {}, {}, {}});
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
    for (const auto& r : rows) {
      out += csv_field(p.product.id) + "," + std::to_string(to_ns(r.t)) + "," + r.event + "," + csv_field(r.location) +
             "," + csv_field(r.step) + "," + csv_field(r.detail) + "\n";
    }
  }
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoFailure("cannot write " + path.string());
  out << content;
  if (!out) throw IoFailure("write failed for " + path.string());
}

// Writes every artifact into `dir` (created if needed) and returns the paths.
inline std::vector<std::filesystem::path> write_artifacts(const RunResult& r, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoFailure("cannot create output directory " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto put = [&](const char* name, const std::string& content) {
    write_file(dir / name, content);
    written.push_back(dir / name);
  };
  put("metrics.json", metrics_json(r).dump(2) + "\n");
  put("packets.csv", packets_csv(r));
  put("safety_log.csv", safety_log_csv(r.safety_log));
  put("compliance.json", compliance_json(r.compliance).dump(2) + "\n");
  put("compliance.txt", r.compliance.table());
  put("products.csv", products_csv(r.products));
  return written;
}

}  // namespace fabsim::io
