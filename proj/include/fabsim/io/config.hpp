#pragma once

// Scenario files: YAML in, YAML out. Unknown keys are rejected and every
// error names the line and the dotted field path. Durations are strings with
// a unit ("125us", "12ms", "1.5s") and are converted exactly.

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fabsim/errors.hpp"
#include "fabsim/simulation.hpp"

namespace fabsim::io {

// Exact conversion; rejects values that are not whole nanoseconds.
inline Duration parse_duration(std::string_view text) {
  auto fail = [&](const std::string& why) -> Duration {
    throw InvalidArgument("invalid duration '" + std::string(text) + "': " + why);
  };
  std::size_t i = 0;
  std::string whole, frac;
  while (i < text.size() && text[i] >= '0' && text[i] <= '9') whole.push_back(text[i++]);
  if (i < text.size() && text[i] == '.') {
    ++i;
    while (i < text.size() && text[i] >= '0' && text[i] <= '9') frac.push_back(text[i++]);
    if (frac.empty()) return fail("digits expected after the decimal point");
  }
  if (whole.empty()) return fail("expected a non-negative number followed by ns, us, ms or s");
  while (i < text.size() && text[i] == ' ') ++i;
  const std::string_view unit = text.substr(i);
  std::int64_t scale = 0;
  if (unit == "ns") scale = 1;
  else if (unit == "us") scale = 1'000;
  else if (unit == "ms") scale = 1'000'000;
  else if (unit == "s") scale = 1'000'000'000;
  else return fail("unit must be ns, us, ms or s");
  if (whole.size() > 12) return fail("value too large");
  std::int64_t ns = std::stoll(whole) * scale;
  std::int64_t denom = 1;
  std::int64_t num = 0;
  for (char c : frac) {
    if (denom > 1'000'000'000) return fail("too many decimal places");
    denom *= 10;
    num = num * 10 + (c - '0');
  }
  if ((num * scale) % denom != 0) return fail("not a whole number of nanoseconds");
  ns += num * scale / denom;
  return Duration{ns};
}

// Largest unit that represents the value exactly.
inline std::string format_duration(Duration d) {
  const std::int64_t ns = d.count();
  if (ns != 0 && ns % 1'000'000'000 == 0) return std::to_string(ns / 1'000'000'000) + "s";
  if (ns != 0 && ns % 1'000'000 == 0) return std::to_string(ns / 1'000'000) + "ms";
  if (ns != 0 && ns % 1'000 == 0) return std::to_string(ns / 1'000) + "us";
  return std::to_string(ns) + "ns";
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, end);
}

namespace detail {

class Field {
 public:
  Field(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const YAML::Node& node() const { return node_; }

  std::string where() const {
    const auto m = node_.Mark();
    std::string w = m.line >= 0 ? "line " + std::to_string(m.line + 1) : std::string{};
    if (!path_.empty()) w += (w.empty() ? "" : ", ") + std::string("field ") + path_;
    return w;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ConfigInvalid(where(), what); }

  // Map with only the given keys.
  void expect_map(std::initializer_list<std::string_view> allowed) const {
    if (!node_.IsMap()) fail("expected a mapping");
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      bool ok = false;
      for (auto a : allowed) ok = ok || a == key;
      if (!ok) {
        std::string list;
        for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
        Field(kv.first, child_path(key)).fail("unknown key '" + key + "' (allowed: " + list + ")");
      }
    }
  }

  std::optional<Field> get(std::string_view key) const {
    const auto n = node_[std::string(key)];
    if (!n.IsDefined() || n.IsNull()) return std::nullopt;
    return Field(n, child_path(key));
  }

  Field require(std::string_view key) const {
    auto f = get(key);
    if (!f) fail("missing required key '" + std::string(key) + "'");
    return *f;
  }

  std::vector<Field> items() const {
    if (!node_.IsSequence()) fail("expected a list");
    std::vector<Field> out;
    for (std::size_t i = 0; i < node_.size(); ++i) out.emplace_back(node_[i], path_ + "[" + std::to_string(i) + "]");
    return out;
  }

  template <class T>
  T as(std::string_view what) const {
    if (!node_.IsScalar()) fail("expected " + std::string(what));
    try {
      return node_.as<T>();
    } catch (const YAML::Exception&) {
      fail("expected " + std::string(what) + ", got '" + node_.Scalar() + "'");
    }
  }

  std::string str() const { return as<std::string>("a string"); }
  double real() const { return as<double>("a number"); }
  int integer() const { return as<int>("an integer"); }
  std::int64_t int64() const { return as<std::int64_t>("an integer"); }
  bool boolean() const { return as<bool>("true or false"); }

  Duration duration() const {
    const auto s = as<std::string>("a duration such as 12ms");
    try {
      return parse_duration(s);
    } catch (const InvalidArgument& e) {
      fail(e.what());
    }
  }

  // Runs `f`, turning model validation errors into located config errors.
  template <class F>
  auto guard(F&& f) const {
    try {
      return f();
    } catch (const ConfigInvalid&) {
      throw;
    } catch (const Error& e) {
      fail(e.what());
    }
  }

 private:
  std::string child_path(std::string_view key) const { return path_.empty() ? std::string(key) : path_ + "." + std::string(key); }

  YAML::Node node_;
  std::string path_;
};

inline void read_nr(const Field& f, Scenario& s) {
  f.expect_map({"numerology", "tti", "carrier_prb", "slot_format", "slot_formats", "bwps"});
  if (auto v = f.get("numerology")) {
    s.nr.numerology = v->integer();
    if (s.nr.numerology < 0 || s.nr.numerology > nr::kMaxNumerology) v->fail("numerology must be 0..6");
  }
  if (auto v = f.get("tti")) s.link.tti = v->guard([&] { return nr::TtiConfig::from_duration(v->duration()); });
  if (auto v = f.get("carrier_prb")) s.nr.carrier_prb = v->integer();
  if (auto v = f.get("slot_formats")) {
    s.nr.extra_slot_formats.clear();
    for (const auto& e : v->items()) {
      e.expect_map({"index", "symbols"});
      const int index = e.require("index").integer();
      const auto sym = e.require("symbols");
      auto fmt = sym.guard([&] { return nr::SlotFormat::parse(sym.str()); });
      if (index < 0 || index > 255) e.fail("slot format index out of range 0..255");
      s.nr.extra_slot_formats.emplace_back(index, fmt);
    }
  }
  if (auto v = f.get("slot_format")) {
    s.nr.slot_format = v->integer();
    if (!s.nr.slot_table().contains(s.nr.slot_format)) {
      v->fail("slot format " + std::to_string(s.nr.slot_format) + " is not in the table");
    }
  }
  if (auto v = f.get("bwps")) {
    s.nr.bwps.clear();
    for (const auto& e : v->items()) {
      e.expect_map({"name", "scs_khz", "cp", "start_prb", "size_prb", "coreset_id", "frequency_location"});
      nr::BandwidthPart b;
      if (auto x = e.get("name")) b.name = x->str();
      b.scs_khz = e.require("scs_khz").integer();
      if (auto x = e.get("cp")) {
        const auto cp = x->str();
        if (cp == "normal") b.cp = nr::CyclicPrefix::Normal;
        else if (cp == "extended") b.cp = nr::CyclicPrefix::Extended;
        else x->fail("cyclic prefix must be normal or extended");
      }
      b.start_prb = e.require("start_prb").integer();
      b.size_prb = e.require("size_prb").integer();
      if (auto x = e.get("coreset_id")) b.coreset_id = x->integer();
      if (auto x = e.get("frequency_location")) b.frequency_location = x->integer();
      s.nr.bwps.push_back(b);
    }
  }
  if (s.nr.carrier_prb <= 0) f.fail("carrier_prb must be positive");
  const auto report = nr::validate_bwp_partition(s.nr.carrier_prb, s.nr.bwps);
  if (!report.valid()) {
    const auto bw = f.get("bwps");
    (bw ? *bw : f).fail(report.describe(s.nr.bwps));
  }
}

inline std::vector<link::BlerAnchor> read_bler_anchors(const Field& f) {
  std::vector<link::BlerAnchor> out;
  for (const auto& a : f.items()) {
    const auto pair = a.items();
    if (pair.size() != 2) a.fail("anchor must be [snr_db, bler]");
    out.push_back({pair[0].real(), pair[1].real()});
  }
  return out;
}

inline void read_link(const Field& f, Scenario& s) {
  f.expect_map({"waveform", "channel", "snr_db", "carrier_mhz", "bandwidth_mhz", "processing_delay", "outages",
                "bler_curves", "throughput"});
  if (auto v = f.get("waveform")) s.link.waveform = v->guard([&] { return link::parse_waveform(v->str()); });
  if (auto v = f.get("channel")) s.link.channel = v->str();
  if (auto v = f.get("snr_db")) s.link.snr_db = v->real();
  if (auto v = f.get("carrier_mhz")) s.link.carrier_mhz = v->integer();
  if (auto v = f.get("bandwidth_mhz")) s.link.bandwidth_mhz = v->integer();
  if (auto v = f.get("processing_delay")) s.link.processing_delay = v->duration();
  if (auto v = f.get("outages")) {
    s.outages.clear();
    for (const auto& e : v->items()) {
      e.expect_map({"from", "to"});
      link::OutageWindow w{SimTime{e.require("from").duration()}, SimTime{e.require("to").duration()}};
      if (w.to < w.from) e.fail("outage ends before it starts");
      s.outages.push_back(w);
    }
  }
  if (auto v = f.get("bler_curves")) {
    s.bler_curves.clear();
    for (const auto& e : v->items()) {
      e.expect_map({"waveform", "channel", "anchors", "floor", "tail_slope"});
      CurveSpec c;
      const auto w = e.require("waveform");
      c.waveform = w.guard([&] { return link::parse_waveform(w.str()); });
      c.channel = e.require("channel").str();
      c.anchors = read_bler_anchors(e.require("anchors"));
      if (auto x = e.get("floor")) c.floor = x->real();
      if (auto x = e.get("tail_slope")) c.tail_slope = x->real();
      e.guard([&] { return link::BlerCurve{c.anchors, c.floor, c.tail_slope}; });
      s.bler_curves.push_back(std::move(c));
    }
  }
  if (auto v = f.get("throughput")) {
    std::vector<link::ThroughputAnchor> table;
    for (const auto& a : v->items()) {
      const auto pair = a.items();
      if (pair.size() != 2) a.fail("anchor must be [snr_db, bits_per_second]");
      table.push_back({pair[0].real(), pair[1].real()});
    }
    v->guard([&] { return link::ThroughputTable{table}; });
    s.throughput = std::move(table);
  }
  f.guard([&] {
    s.link.validate();
    const auto model = s.link_model();
    return model.bler(s.link) + model.throughput(s.link);
  });
}

inline void read_traffic(const Field& f, Scenario& s) {
  f.expect_map({"catalog", "camera"});
  if (auto v = f.get("camera")) {
    v->expect_map({"total_bps", "packet_bytes", "forward_share", "panorama_share", "product_share"});
    auto& c = s.traffic.camera;
    if (auto x = v->get("total_bps")) c.total_bps = x->real();
    if (auto x = v->get("packet_bytes")) c.packet_bytes = x->int64();
    if (auto x = v->get("forward_share")) c.forward_share = x->real();
    if (auto x = v->get("panorama_share")) c.panorama_share = x->real();
    if (auto x = v->get("product_share")) c.product_share = x->real();
  }
  if (auto v = f.get("catalog")) {
    if (v->node().IsScalar()) {
      if (v->str() != "measured") v->fail("catalog must be the keyword 'measured' or a list of streams");
      s.traffic.measured = true;
      s.traffic.streams.clear();
    } else {
      s.traffic.measured = false;
      s.traffic.streams.clear();
      for (const auto& e : v->items()) {
        e.expect_map({"name", "source", "destination", "protocol", "class", "payload_bytes", "rate_hz", "pattern",
                      "phase"});
        traffic::TrafficProfile p;
        p.name = e.require("name").str();
        if (auto x = e.get("source")) p.source = x->str();
        if (auto x = e.get("destination")) p.destination = x->str();
        if (auto x = e.get("protocol")) p.protocol = x->str();
        const auto cls = e.require("class");
        p.cls = cls.guard([&] { return traffic::parse_stream_class(cls.str()); });
        p.payload_bytes = e.require("payload_bytes").int64();
        p.rate_hz = e.require("rate_hz").real();
        if (auto x = e.get("pattern")) p.pattern = x->guard([&] { return traffic::parse_pattern(x->str()); });
        if (auto x = e.get("phase")) p.phase = x->duration();
        e.guard([&] {
          p.validate();
          return 0;
        });
        s.traffic.streams.push_back(std::move(p));
      }
    }
  }
  f.guard([&] {
    std::set<std::string> names;
    for (const auto& p : s.traffic.catalog()) {
      if (!names.insert(p.name).second) throw InvalidArgument("duplicate stream " + p.name);
    }
    return 0;
  });
}

inline void read_factory(const Field& f, Scenario& s) {
  f.expect_map({"recipe", "islands", "manual", "transfer_time", "transit", "release", "inspection", "registry_period",
                "staleness_factor", "divert_busy_to_manual", "robot_id", "robot_home"});
  auto& c = s.factory;
  if (auto v = f.get("recipe")) {
    c.recipe.clear();
    for (const auto& e : v->items()) c.recipe.push_back(e.str());
  }
  if (auto v = f.get("islands")) {
    c.islands.clear();
    for (const auto& e : v->items()) {
      e.expect_map({"id", "color", "modules"});
      factory::IslandSpec isl;
      isl.id = e.require("id").str();
      if (auto x = e.get("color")) isl.color = x->str();
      if (auto x = e.get("modules")) {
        for (const auto& m : x->items()) {
          m.expect_map({"name", "capability", "service_time"});
          isl.modules.push_back({m.require("name").str(), m.require("capability").str(), m.require("service_time").duration()});
        }
      }
      c.islands.push_back(std::move(isl));
    }
  }
  if (auto v = f.get("manual")) {
    v->expect_map({"enabled", "service_time", "rework_time"});
    if (auto x = v->get("enabled")) c.manual.enabled = x->boolean();
    if (auto x = v->get("service_time")) c.manual.service_time = x->duration();
    if (auto x = v->get("rework_time")) c.manual.rework_time = x->duration();
  }
  if (auto v = f.get("transfer_time")) c.transfer_time = v->duration();
  if (auto v = f.get("transit")) {
    c.transit = {};
    for (const auto& e : v->items()) {
      e.expect_map({"a", "b", "time"});
      const auto t = e.require("time");
      const auto d = t.duration();
      e.guard([&] {
        c.transit.set(e.require("a").str(), e.require("b").str(), d);
        return 0;
      });
    }
  }
  if (auto v = f.get("release")) {
    v->expect_map({"count", "first_at", "interval", "island"});
    if (auto x = v->get("count")) c.release.count = x->integer();
    if (auto x = v->get("first_at")) c.release.first_at = x->duration();
    if (auto x = v->get("interval")) c.release.interval = x->duration();
    if (auto x = v->get("island")) c.release.island = x->str();
  }
  if (auto v = f.get("inspection")) {
    v->expect_map({"defect_probability", "image_bytes", "inference_time", "verdict_bytes"});
    if (auto x = v->get("defect_probability")) c.inspection.defect_probability = x->real();
    if (auto x = v->get("image_bytes")) c.inspection.image_bytes = x->int64();
    if (auto x = v->get("inference_time")) c.inspection.inference_time = x->duration();
    if (auto x = v->get("verdict_bytes")) c.inspection.verdict_bytes = x->int64();
  }
  if (auto v = f.get("registry_period")) c.registry_period = v->duration();
  if (auto v = f.get("staleness_factor")) c.staleness_factor = v->integer();
  if (auto v = f.get("divert_busy_to_manual")) c.divert_busy_to_manual = v->boolean();
  if (auto v = f.get("robot_id")) c.robot_id = v->str();
  if (auto v = f.get("robot_home")) c.robot_home = v->str();
  f.guard([&] {
    c.validate();
    return 0;
  });
}

inline void read_safety(const Field& f, Scenario& s) {
  f.expect_map({"endpoint_a", "endpoint_b", "watchdog", "retry_window"});
  if (auto v = f.get("endpoint_a")) s.safety.endpoint_a = v->str();
  if (auto v = f.get("endpoint_b")) s.safety.endpoint_b = v->str();
  if (auto v = f.get("watchdog")) {
    s.safety.watchdog = v->duration();
    if (s.safety.watchdog <= Duration::zero()) v->fail("watchdog must be positive");
  }
  if (auto v = f.get("retry_window")) s.safety.retry_window = v->duration();
}

inline void read_script(const Field& f, Scenario& s) {
  s.script.clear();
  for (const auto& e : f.items()) {
    e.expect_map({"at", "action", "target", "sensor", "duration"});
    ScriptAction a;
    a.at = e.require("at").duration();
    const auto act = e.require("action");
    a.kind = act.guard([&] { return parse_script_kind(act.str()); });
    if (auto x = e.get("target")) a.target = x->str();
    if (auto x = e.get("sensor")) a.sensor = x->str();
    if (auto x = e.get("duration")) a.duration = x->duration();
    using K = ScriptAction::Kind;
    if (a.kind == K::Obstacle) {
      const auto sensor = e.require("sensor");
      sensor.guard([&] { return safety::parse_sensor(sensor.str()); });
    } else if (a.kind != K::RobotReset && a.target.empty()) {
      e.fail("action '" + std::string(to_string(a.kind)) + "' needs a target");
    }
    s.script.push_back(std::move(a));
  }
}

}  // namespace detail

// Missing sections and keys keep the values of Scenario::defaults().
inline Scenario parse_scenario(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigInvalid("line " + std::to_string(e.mark.line + 1), e.msg);
  }
  Scenario s = Scenario::defaults();
  if (!root.IsDefined() || root.IsNull()) return s;
  const detail::Field f(root, "");
  f.expect_map({"seed", "horizon", "jitter", "service_area", "nr", "link", "traffic", "factory", "safety", "script"});
  if (auto v = f.get("seed")) s.seed = v->as<std::uint64_t>("an unsigned 64-bit integer");
  if (auto v = f.get("horizon")) s.horizon = v->duration();
  if (auto v = f.get("jitter")) s.jitter = v->guard([&] { return compliance::parse_jitter_mode(v->str()); });
  if (auto v = f.get("service_area")) {
    v->expect_map({"width_m", "depth_m"});
    s.service_area.width_m = v->require("width_m").real();
    s.service_area.depth_m = v->require("depth_m").real();
    if (s.service_area.width_m <= 0 || s.service_area.depth_m <= 0) v->fail("service area must be positive");
  }
  if (auto v = f.get("nr")) detail::read_nr(*v, s);
  if (auto v = f.get("link")) detail::read_link(*v, s);
  if (auto v = f.get("traffic")) detail::read_traffic(*v, s);
  if (auto v = f.get("factory")) detail::read_factory(*v, s);
  if (auto v = f.get("safety")) detail::read_safety(*v, s);
  if (auto v = f.get("script")) detail::read_script(*v, s);
  try {
    s.validate();
  } catch (const Error& e) {
    throw ConfigInvalid("scenario", e.what());
  }
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot read scenario file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_scenario(ss.str());
  } catch (const ConfigInvalid& e) {
    const std::string full = e.what();
    const std::string what = e.where().empty() ? full : full.substr(e.where().size() + 2);
    throw ConfigInvalid(e.where().empty() ? path : path + ": " + e.where(), what);
  }
}

// Full scenario, every key explicit, parseable by parse_scenario.
inline std::string dump_scenario(const Scenario& s) {
  YAML::Emitter out;
  auto dbl = [](double v) { return format_double(v); };
  auto dur = [](Duration d) { return format_duration(d); };
  auto seq_style = [](bool empty) { return empty ? YAML::Flow : YAML::Block; };

  out << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << s.seed;
  out << YAML::Key << "horizon" << YAML::Value << dur(s.horizon);
  out << YAML::Key << "jitter" << YAML::Value << std::string(compliance::to_string(s.jitter));
  out << YAML::Key << "service_area" << YAML::Value << YAML::Flow << YAML::BeginMap << YAML::Key << "width_m"
      << YAML::Value << dbl(s.service_area.width_m) << YAML::Key << "depth_m" << YAML::Value
      << dbl(s.service_area.depth_m) << YAML::EndMap;

  out << YAML::Key << "nr" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "numerology" << YAML::Value << s.nr.numerology;
  out << YAML::Key << "tti" << YAML::Value << dur(s.link.tti.duration());
  out << YAML::Key << "carrier_prb" << YAML::Value << s.nr.carrier_prb;
  out << YAML::Key << "slot_format" << YAML::Value << s.nr.slot_format;
  out << YAML::Key << "slot_formats" << YAML::Value << seq_style(s.nr.extra_slot_formats.empty()) << YAML::BeginSeq;
  for (const auto& [i, fmt] : s.nr.extra_slot_formats) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "index" << YAML::Value << i << YAML::Key << "symbols"
        << YAML::Value << fmt.to_string() << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "bwps" << YAML::Value << seq_style(s.nr.bwps.empty()) << YAML::BeginSeq;
  for (const auto& b : s.nr.bwps) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "name" << YAML::Value << b.name;
    out << YAML::Key << "scs_khz" << YAML::Value << b.scs_khz;
    out << YAML::Key << "cp" << YAML::Value << std::string(nr::to_string(b.cp));
    out << YAML::Key << "start_prb" << YAML::Value << b.start_prb;
    out << YAML::Key << "size_prb" << YAML::Value << b.size_prb;
    out << YAML::Key << "coreset_id" << YAML::Value << b.coreset_id;
    out << YAML::Key << "frequency_location" << YAML::Value << b.frequency_location;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;

  out << YAML::Key << "link" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "waveform" << YAML::Value << std::string(link::to_string(s.link.waveform));
  out << YAML::Key << "channel" << YAML::Value << s.link.channel;
  out << YAML::Key << "snr_db" << YAML::Value << dbl(s.link.snr_db);
  out << YAML::Key << "carrier_mhz" << YAML::Value << s.link.carrier_mhz;
  out << YAML::Key << "bandwidth_mhz" << YAML::Value << s.link.bandwidth_mhz;
  out << YAML::Key << "processing_delay" << YAML::Value << dur(s.link.processing_delay);
  out << YAML::Key << "outages" << YAML::Value << seq_style(s.outages.empty()) << YAML::BeginSeq;
  for (const auto& w : s.outages) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "from" << YAML::Value << dur(w.from.time_since_epoch())
        << YAML::Key << "to" << YAML::Value << dur(w.to.time_since_epoch()) << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "bler_curves" << YAML::Value << seq_style(s.bler_curves.empty()) << YAML::BeginSeq;
  for (const auto& c : s.bler_curves) {
    out << YAML::BeginMap;
    out << YAML::Key << "waveform" << YAML::Value << std::string(link::to_string(c.waveform));
    out << YAML::Key << "channel" << YAML::Value << c.channel;
    out << YAML::Key << "anchors" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (const auto& a : c.anchors) out << YAML::Flow << YAML::BeginSeq << dbl(a.snr_db) << dbl(a.bler) << YAML::EndSeq;
    out << YAML::EndSeq;
    out << YAML::Key << "floor" << YAML::Value << dbl(c.floor);
    out << YAML::Key << "tail_slope" << YAML::Value << dbl(c.tail_slope);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  if (s.throughput) {
    out << YAML::Key << "throughput" << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (const auto& a : *s.throughput) {
      out << YAML::Flow << YAML::BeginSeq << dbl(a.snr_db) << dbl(a.bits_per_second) << YAML::EndSeq;
    }
    out << YAML::EndSeq;
  }
  out << YAML::EndMap;

  out << YAML::Key << "traffic" << YAML::Value << YAML::BeginMap;
  if (s.traffic.measured) {
    out << YAML::Key << "catalog" << YAML::Value << "measured";
  } else {
    out << YAML::Key << "catalog" << YAML::Value << YAML::BeginSeq;
    for (const auto& p : s.traffic.streams) {
      out << YAML::Flow << YAML::BeginMap;
      out << YAML::Key << "name" << YAML::Value << p.name;
      out << YAML::Key << "source" << YAML::Value << p.source;
      out << YAML::Key << "destination" << YAML::Value << p.destination;
      out << YAML::Key << "protocol" << YAML::Value << p.protocol;
      out << YAML::Key << "class" << YAML::Value << std::string(traffic::to_string(p.cls));
      out << YAML::Key << "payload_bytes" << YAML::Value << p.payload_bytes;
      out << YAML::Key << "rate_hz" << YAML::Value << dbl(p.rate_hz);
      out << YAML::Key << "pattern" << YAML::Value << std::string(traffic::to_string(p.pattern));
      out << YAML::Key << "phase" << YAML::Value << dur(p.phase);
      out << YAML::EndMap;
    }
    out << YAML::EndSeq;
  }
  const auto& cam = s.traffic.camera;
  out << YAML::Key << "camera" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "total_bps" << YAML::Value << dbl(cam.total_bps);
  out << YAML::Key << "packet_bytes" << YAML::Value << cam.packet_bytes;
  out << YAML::Key << "forward_share" << YAML::Value << dbl(cam.forward_share);
  out << YAML::Key << "panorama_share" << YAML::Value << dbl(cam.panorama_share);
  out << YAML::Key << "product_share" << YAML::Value << dbl(cam.product_share);
  out << YAML::EndMap << YAML::EndMap;

  const auto& c = s.factory;
  out << YAML::Key << "factory" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "recipe" << YAML::Value << YAML::Flow << c.recipe;
  out << YAML::Key << "islands" << YAML::Value << YAML::BeginSeq;
  for (const auto& i : c.islands) {
    out << YAML::BeginMap;
    out << YAML::Key << "id" << YAML::Value << i.id;
    out << YAML::Key << "color" << YAML::Value << i.color;
    out << YAML::Key << "modules" << YAML::Value << YAML::BeginSeq;
    for (const auto& m : i.modules) {
      out << YAML::Flow << YAML::BeginMap << YAML::Key << "name" << YAML::Value << m.name << YAML::Key << "capability"
          << YAML::Value << m.capability << YAML::Key << "service_time" << YAML::Value << dur(m.service_time)
          << YAML::EndMap;
    }
    out << YAML::EndSeq << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "manual" << YAML::Value << YAML::Flow << YAML::BeginMap;
  out << YAML::Key << "enabled" << YAML::Value << c.manual.enabled;
  out << YAML::Key << "service_time" << YAML::Value << dur(c.manual.service_time);
  out << YAML::Key << "rework_time" << YAML::Value << dur(c.manual.rework_time);
  out << YAML::EndMap;
  out << YAML::Key << "transfer_time" << YAML::Value << dur(c.transfer_time);
  out << YAML::Key << "transit" << YAML::Value << YAML::BeginSeq;
  for (const auto& [k, d] : c.transit.entries()) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "a" << YAML::Value << k.first << YAML::Key << "b"
        << YAML::Value << k.second << YAML::Key << "time" << YAML::Value << dur(d) << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::Key << "release" << YAML::Value << YAML::Flow << YAML::BeginMap;
  out << YAML::Key << "count" << YAML::Value << c.release.count;
  out << YAML::Key << "first_at" << YAML::Value << dur(c.release.first_at);
  out << YAML::Key << "interval" << YAML::Value << dur(c.release.interval);
  out << YAML::Key << "island" << YAML::Value << c.release.island;
  out << YAML::EndMap;
  out << YAML::Key << "inspection" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "defect_probability" << YAML::Value << dbl(c.inspection.defect_probability);
  out << YAML::Key << "image_bytes" << YAML::Value << c.inspection.image_bytes;
  out << YAML::Key << "inference_time" << YAML::Value << dur(c.inspection.inference_time);
  out << YAML::Key << "verdict_bytes" << YAML::Value << c.inspection.verdict_bytes;
  out << YAML::EndMap;
  out << YAML::Key << "registry_period" << YAML::Value << dur(c.registry_period);
  out << YAML::Key << "staleness_factor" << YAML::Value << c.staleness_factor;
  out << YAML::Key << "divert_busy_to_manual" << YAML::Value << c.divert_busy_to_manual;
  out << YAML::Key << "robot_id" << YAML::Value << c.robot_id;
  if (!c.robot_home.empty()) out << YAML::Key << "robot_home" << YAML::Value << c.robot_home;
  out << YAML::EndMap;

  out << YAML::Key << "safety" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "endpoint_a" << YAML::Value << s.safety.endpoint_a;
  out << YAML::Key << "endpoint_b" << YAML::Value << s.safety.endpoint_b;
  out << YAML::Key << "watchdog" << YAML::Value << dur(s.safety.watchdog);
  if (s.safety.retry_window) out << YAML::Key << "retry_window" << YAML::Value << dur(*s.safety.retry_window);
  out << YAML::EndMap;

  out << YAML::Key << "script" << YAML::Value << seq_style(s.script.empty()) << YAML::BeginSeq;
  for (const auto& a : s.script) {
    out << YAML::Flow << YAML::BeginMap;
    out << YAML::Key << "at" << YAML::Value << dur(a.at);
    out << YAML::Key << "action" << YAML::Value << std::string(to_string(a.kind));
    if (!a.target.empty()) out << YAML::Key << "target" << YAML::Value << a.target;
    if (!a.sensor.empty()) out << YAML::Key << "sensor" << YAML::Value << a.sensor;
    if (a.kind == ScriptAction::Kind::Obstacle || a.duration != Duration::zero()) out << YAML::Key << "duration" << YAML::Value << dur(a.duration);
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace fabsim::io
