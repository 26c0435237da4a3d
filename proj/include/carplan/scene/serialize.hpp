#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "carplan/scene/types.hpp"

namespace carplan {

inline constexpr std::uint32_t kScenarioSchemaVersion = 1;

/// Malformed scenario data. `offset` is a byte offset (binary) or line number (JSONL).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : std::runtime_error(what + " at " + std::to_string(offset)), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

// ---- JSON ----

namespace json_detail {
using nlohmann::json;

inline json pts(const std::vector<Vec2>& v) {
  json a = json::array();
  for (auto p : v) a.push_back({p.x, p.y});
  return a;
}
inline std::vector<Vec2> pts(const json& j) {
  std::vector<Vec2> v;
  for (const auto& p : j) v.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
  return v;
}
inline json track(const AgentTrack& t) {
  json states = json::array();
  for (const auto& s : t.states)
    states.push_back({s.position.x, s.position.y, s.heading, s.velocity.x, s.velocity.y, s.length, s.width});
  return {{"category", std::string(to_string(t.states.empty() ? AgentCategory::vehicle : t.states.front().category))},
          {"states", states},
          {"valid", t.valid},
          {"path", pts(t.path)},
          {"desired_speed", t.desired_speed}};
}
inline AgentTrack track(const json& j) {
  AgentTrack t;
  const auto cat = parse_category(j.at("category").get<std::string>());
  if (!cat) throw std::invalid_argument("unknown category");
  for (const auto& s : j.at("states")) {
    AgentState st;
    st.position = {s.at(0).get<double>(), s.at(1).get<double>()};
    st.heading = s.at(2).get<double>();
    st.velocity = {s.at(3).get<double>(), s.at(4).get<double>()};
    st.length = s.at(5).get<double>();
    st.width = s.at(6).get<double>();
    st.category = *cat;
    t.states.push_back(st);
  }
  t.valid = j.at("valid").get<std::vector<std::uint8_t>>();
  if (t.valid.size() != t.states.size()) throw std::invalid_argument("valid/states length mismatch");
  t.path = pts(j.at("path"));
  t.desired_speed = j.at("desired_speed").get<double>();
  return t;
}
}  // namespace json_detail

inline nlohmann::json scenario_to_json(const Scenario& s) {
  using namespace json_detail;
  json agents = json::array();
  for (const auto& a : s.agents) agents.push_back(track(a));
  json map = json::array();
  for (const auto& m : s.map) map.push_back({{"kind", std::string(to_string(m.kind))}, {"points", pts(m.points)}});
  json cls = json::array();
  for (const auto& c : s.centerlines) cls.push_back(pts(c.points));
  json drv = json::array();
  for (const auto& p : s.drivable_region) drv.push_back(pts(p.vertices));
  return {{"version", kScenarioSchemaVersion},
          {"seed", s.seed},
          {"topology", std::string(to_string(s.topology))},
          {"history_steps", s.history_steps},
          {"future_steps", s.future_steps},
          {"log_steps", s.log_steps},
          {"av", track(s.av)},
          {"agents", agents},
          {"map", map},
          {"centerlines", cls},
          {"goal", {s.goal.x, s.goal.y}},
          {"drivable_region", drv},
          {"route", pts(s.route)}};
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
  using namespace json_detail;
  const auto version = j.at("version").get<std::uint32_t>();
  if (version != kScenarioSchemaVersion)
    throw std::invalid_argument("unsupported scenario schema version " + std::to_string(version));
  Scenario s;
  s.seed = j.at("seed").get<std::uint64_t>();
  const auto topo = parse_topology(j.at("topology").get<std::string>());
  if (!topo) throw std::invalid_argument("unknown topology");
  s.topology = *topo;
  s.history_steps = j.at("history_steps").get<int>();
  s.future_steps = j.at("future_steps").get<int>();
  s.log_steps = j.at("log_steps").get<int>();
  s.av = track(j.at("av"));
  for (const auto& a : j.at("agents")) s.agents.push_back(track(a));
  for (const auto& m : j.at("map")) {
    const auto kind = parse_polyline_kind(m.at("kind").get<std::string>());
    if (!kind) throw std::invalid_argument("unknown polyline kind");
    s.map.push_back({pts(m.at("points")), *kind});
  }
  for (const auto& c : j.at("centerlines")) s.centerlines.push_back({pts(c)});
  s.goal = {j.at("goal").at(0).get<double>(), j.at("goal").at(1).get<double>()};
  for (const auto& p : j.at("drivable_region")) s.drivable_region.push_back({pts(p)});
  s.route = pts(j.at("route"));
  return s;
}

inline void write_jsonl(std::ostream& os, const std::vector<Scenario>& corpus) {
  for (const auto& s : corpus) os << scenario_to_json(s).dump() << '\n';
}

inline std::vector<Scenario> read_jsonl(std::istream& is) {
  std::vector<Scenario> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(scenario_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(std::string("scenario corpus line invalid: ") + e.what() + "; line", lineno);
    }
  }
  return out;
}

inline void save_corpus(const std::string& path, const std::vector<Scenario>& corpus) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_jsonl(os, corpus);
}

inline std::vector<Scenario> load_corpus(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_jsonl(is);
}

// ---- binary ----
//
// "CPLNSCN\0" | u32 version | u64 body_len | body. Every array in the body is
// prefixed by a u32 element count. Integers and doubles are little-endian.

namespace bin_detail {

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void vec2(Vec2 p) {
    f64(p.x);
    f64(p.y);
  }
  void points(const std::vector<Vec2>& v) {
    u32(static_cast<std::uint32_t>(v.size()));
    for (auto p : v) vec2(p);
  }
  void track(const AgentTrack& t) {
    u32(static_cast<std::uint32_t>(t.states.size()));
    for (std::size_t i = 0; i < t.states.size(); ++i) {
      const auto& s = t.states[i];
      vec2(s.position);
      f64(s.heading);
      vec2(s.velocity);
      f64(s.length);
      f64(s.width);
      u8(static_cast<std::uint8_t>(s.category));
      u8(t.valid[i]);
    }
    points(t.path);
    f64(t.desired_speed);
  }
  std::string take() { return std::move(buf_); }

 private:
  void raw(const void* p, std::size_t n) {
    char tmp[8];
    std::memcpy(tmp, p, n);
    if constexpr (std::endian::native == std::endian::big) std::reverse(tmp, tmp + n);
    buf_.append(tmp, n);
  }
  std::string buf_;
};

class Reader {
 public:
  Reader(const std::string& data, std::size_t pos, std::size_t end) : d_(data), pos_(pos), end_(end) {}

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(d_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  Vec2 vec2() {
    const double x = f64();
    return {x, f64()};
  }
  /// Element count with a sanity bound against the remaining bytes.
  std::size_t count(std::size_t min_element_bytes) {
    const std::size_t at = pos_;
    const std::uint32_t n = u32();
    if (static_cast<std::uint64_t>(n) * min_element_bytes > end_ - pos_) throw ParseError("length prefix exceeds data", at);
    return n;
  }
  std::vector<Vec2> points() {
    std::vector<Vec2> v(count(16));
    for (auto& p : v) p = vec2();
    return v;
  }
  AgentTrack track() {
    AgentTrack t;
    const std::size_t n = count(8 * 7 + 2);
    t.states.resize(n);
    t.valid.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = t.states[i];
      s.position = vec2();
      s.heading = f64();
      s.velocity = vec2();
      s.length = f64();
      s.width = f64();
      const std::size_t at = pos_;
      const std::uint8_t c = u8();
      if (c > static_cast<std::uint8_t>(AgentCategory::bicycle)) throw ParseError("bad agent category", at);
      s.category = static_cast<AgentCategory>(c);
      t.valid[i] = u8();
    }
    t.path = points();
    t.desired_speed = f64();
    return t;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) {
    if (end_ - pos_ < n) throw ParseError("truncated scenario data", pos_);
  }
  void raw(void* p, std::size_t n) {
    need(n);
    char tmp[8];
    std::memcpy(tmp, d_.data() + pos_, n);
    if constexpr (std::endian::native == std::endian::big) std::reverse(tmp, tmp + n);
    std::memcpy(p, tmp, n);
    pos_ += n;
  }
  const std::string& d_;
  std::size_t pos_;
  std::size_t end_;
};

inline constexpr char kMagic[8] = {'C', 'P', 'L', 'N', 'S', 'C', 'N', '\0'};

}  // namespace bin_detail

inline std::string serialize_scenario(const Scenario& s) {
  bin_detail::Writer body;
  body.u64(s.seed);
  body.u8(static_cast<std::uint8_t>(s.topology));
  body.u32(static_cast<std::uint32_t>(s.history_steps));
  body.u32(static_cast<std::uint32_t>(s.future_steps));
  body.u32(static_cast<std::uint32_t>(s.log_steps));
  body.track(s.av);
  body.u32(static_cast<std::uint32_t>(s.agents.size()));
  for (const auto& a : s.agents) body.track(a);
  body.u32(static_cast<std::uint32_t>(s.map.size()));
  for (const auto& m : s.map) {
    body.u8(static_cast<std::uint8_t>(m.kind));
    body.points(m.points);
  }
  body.u32(static_cast<std::uint32_t>(s.centerlines.size()));
  for (const auto& c : s.centerlines) body.points(c.points);
  body.vec2(s.goal);
  body.u32(static_cast<std::uint32_t>(s.drivable_region.size()));
  for (const auto& p : s.drivable_region) body.points(p.vertices);
  body.points(s.route);
  const std::string b = body.take();

  bin_detail::Writer head;
  head.u32(kScenarioSchemaVersion);
  head.u64(b.size());
  return std::string(bin_detail::kMagic, 8) + head.take() + b;
}

inline Scenario load_scenario(const std::string& data) {
  using bin_detail::Reader;
  if (data.size() < 8 || std::memcmp(data.data(), bin_detail::kMagic, 8) != 0)
    throw ParseError("not a scenario container", 0);
  Reader head(data, 8, data.size());
  const std::uint32_t version = head.u32();
  if (version != kScenarioSchemaVersion)
    throw ParseError("unsupported scenario version " + std::to_string(version), 8);
  const std::size_t len_at = head.pos();
  const std::uint64_t body_len = head.u64();
  if (body_len != data.size() - head.pos()) throw ParseError("body length prefix does not match data", len_at);

  Reader r(data, head.pos(), data.size());
  Scenario s;
  s.seed = r.u64();
  const std::size_t topo_at = r.pos();
  const std::uint8_t topo = r.u8();
  if (topo > static_cast<std::uint8_t>(Topology::lane_change)) throw ParseError("bad topology", topo_at);
  s.topology = static_cast<Topology>(topo);
  s.history_steps = static_cast<int>(r.u32());
  s.future_steps = static_cast<int>(r.u32());
  s.log_steps = static_cast<int>(r.u32());
  s.av = r.track();
  s.agents.resize(r.count(4));
  for (auto& a : s.agents) a = r.track();
  s.map.resize(r.count(5));
  for (auto& m : s.map) {
    const std::size_t at = r.pos();
    const std::uint8_t k = r.u8();
    if (k > static_cast<std::uint8_t>(PolylineKind::crosswalk)) throw ParseError("bad polyline kind", at);
    m.kind = static_cast<PolylineKind>(k);
    m.points = r.points();
  }
  s.centerlines.resize(r.count(4));
  for (auto& c : s.centerlines) c.points = r.points();
  s.goal = r.vec2();
  s.drivable_region.resize(r.count(4));
  for (auto& p : s.drivable_region) p.vertices = r.points();
  s.route = r.points();
  if (r.pos() != data.size()) throw ParseError("trailing bytes after scenario", r.pos());
  return s;
}

}  // namespace carplan
