#pragma once

// YAML scenario configuration: parse with line diagnostics, emit, resolve
// into a runnable Scenario.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "fiberlink/control.hpp"
#include "fiberlink/core.hpp"
#include "fiberlink/noise_model.hpp"
#include "fiberlink/optics.hpp"
#include "fiberlink/planner.hpp"
#include "fiberlink/presets.hpp"
#include "fiberlink/station.hpp"

namespace fiberlink {

struct ServoTune {
  double zero_ratio = 0.05;
  double gain_margin_db = 12.0;
  bool operator==(const ServoTune&) const = default;
};

struct FilterChains {
  FilterChainSpec lock{{{75e6, 14e6}}};
  FilterChainSpec roundtrip{{{152e6, 4e6}}};
  FilterChainSpec end_to_end{{{76e6, 1e6}}};
  bool operator==(const FilterChains&) const = default;
};

struct RunConfig {
  double duration_s = 100.0;
  double fs_hz = 1.0e4;
  std::uint64_t seed = 1;
  double output_rate_hz = 1.0;
  bool compensation = true;
  double settle_s = 0.5;
  bool short_link = true;
  std::size_t cascade_stages = 1;
  double rf_wobble_rad = 0.0;
  double rf_wobble_hz = 0.0;
  double interferometer_drift_rad_per_sqrt_s = 0.0;
  double rls_tick_s = 1.0e-3;
  bool operator==(const RunConfig&) const = default;
};

struct AnalysisConfig {
  std::vector<double> taus_s{1.0, 10.0, 100.0, 1000.0};
  double prefilter_hz = 10.0;
  std::size_t psd_segment = 4096;
  double psd_overlap = 0.5;
  double carrier_hz = kDefaultCarrierHz;
  bool operator==(const AnalysisConfig&) const = default;
};

struct PlannerConfig {
  double launch_power_dbm = 0.0;
  double excess_noise_db = 7.4;
  std::optional<double> effective_reflectance_db;
  double extra_loss_db = 0.0;
  double marginal_db = 3.0;
  bool operator==(const PlannerConfig&) const = default;
};

struct ScenarioConfig {
  std::string name;
  LinkTopology topology;
  std::vector<std::string> span_noise;  // profile name per device, "" = none
  double group_delay_s_per_km = kDefaultGroupDelayPerKm;
  std::map<std::string, NoiseProfile> noise;
  ServoConfig servo;
  std::optional<double> loop_delay_s;
  std::optional<ServoTune> tune;
  FrequencyPlan plan;
  FilterChains filters;
  DetectionConfig detection;
  RlsThresholds rls;
  PolarizationState polarization;
  RunConfig run;
  AnalysisConfig analysis;
  PlannerConfig planner;
  std::optional<SlipModel> slip_model;
  bool operator==(const ScenarioConfig&) const = default;
};

namespace config_detail {

inline std::string where(const YAML::Node& n, const std::string& key) {
  const auto m = n.Mark();
  if (m.line < 0) return "'" + key + "'";
  return "'" + key + "' (line " + std::to_string(m.line + 1) + ")";
}

inline void allow_keys(const YAML::Node& n, const std::string& block,
                       std::initializer_list<const char*> keys) {
  if (!n.IsMap()) throw ConfigError("config: " + where(n, block) + " must be a mapping");
  std::set<std::string> ok(keys.begin(), keys.end());
  for (const auto& kv : n) {
    const auto k = kv.first.as<std::string>();
    if (!ok.count(k)) {
      throw ConfigError("config: unknown key " + where(kv.first, block + "." + k));
    }
  }
}

template <class T>
T read(const YAML::Node& parent, const std::string& block, const char* key, const T& def) {
  const auto n = parent[key];
  if (!n) return def;
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("config: bad value for " + where(n, block + "." + key));
  }
}

template <class T>
T require(const YAML::Node& parent, const std::string& block, const char* key) {
  const auto n = parent[key];
  if (!n) {
    throw ConfigError("config: missing key " + where(parent, block + "." + key));
  }
  return read<T>(parent, block, key, T{});
}

template <class T>
std::optional<T> maybe(const YAML::Node& parent, const std::string& block, const char* key) {
  if (!parent[key]) return std::nullopt;
  return read<T>(parent, block, key, T{});
}

inline std::string num(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline NoiseProfile parse_profile(const YAML::Node& n, const std::string& block) {
  allow_keys(n, block, {"h", "f_low_hz", "f_high_hz", "schedule"});
  NoiseProfile p;
  const auto h = n["h"];
  if (!h || !h.IsMap()) throw ConfigError("config: " + where(n, block + ".h") + " must be a mapping");
  for (const auto& kv : h) {
    int a = 0;
    double c = 0.0;
    try {
      a = kv.first.as<int>();
      c = kv.second.as<double>();
    } catch (const YAML::Exception&) {
      throw ConfigError("config: bad coefficient " + where(kv.first, block + ".h"));
    }
    p.h[a] = c;
  }
  p.f_low = maybe<double>(n, block, "f_low_hz");
  p.f_high = maybe<double>(n, block, "f_high_hz");
  if (const auto s = n["schedule"]) {
    for (const auto& e : s) {
      allow_keys(e, block + ".schedule", {"t_start_s", "factor"});
      p.schedule.push_back({require<double>(e, block + ".schedule", "t_start_s"),
                            require<double>(e, block + ".schedule", "factor")});
    }
  }
  try {
    validate(p);
  } catch (const ConfigError& e) {
    throw ConfigError("config: " + where(n, block) + ": " + e.what());
  }
  return p;
}

inline FilterChainSpec parse_chain(const YAML::Node& n, const std::string& block) {
  FilterChainSpec c;
  if (!n.IsSequence()) throw ConfigError("config: " + where(n, block) + " must be a list");
  for (const auto& s : n) {
    allow_keys(s, block, {"center_hz", "bandwidth_hz"});
    FilterStage st{require<double>(s, block, "center_hz"), require<double>(s, block, "bandwidth_hz")};
    if (!(st.bandwidth_hz > 0.0)) {
      throw ConfigError("config: bandwidth_hz must be > 0 at " + where(s, block));
    }
    c.stages.push_back(st);
  }
  if (c.stages.empty()) throw ConfigError("config: " + where(n, block) + " has no stages");
  return c;
}

inline Device parse_device(const YAML::Node& n, std::string& noise_ref) {
  const std::string b = "topology.devices";
  const auto type = require<std::string>(n, b, "type");
  noise_ref.clear();
  if (type == "span") {
    allow_keys(n, b, {"type", "length_km", "loss_db_per_km", "K", "noise"});
    Span s;
    s.length_km = require<double>(n, b, "length_km");
    s.loss_db_per_km = read<double>(n, b, "loss_db_per_km", 0.2);
    s.k = read<std::size_t>(n, b, "K", 1);
    noise_ref = read<std::string>(n, b, "noise", "");
    return s;
  }
  if (type == "oadm") {
    allow_keys(n, b, {"type", "insertion_loss_db"});
    return Oadm{read<double>(n, b, "insertion_loss_db", 1.0)};
  }
  if (type == "edfa") {
    allow_keys(n, b, {"type", "gain_db"});
    return Edfa{require<double>(n, b, "gain_db")};
  }
  if (type == "aom") {
    allow_keys(n, b, {"type", "shift_hz"});
    return Aom{require<double>(n, b, "shift_hz")};
  }
  if (type == "reflector") {
    allow_keys(n, b, {"type", "reflectance_db", "note"});
    return Reflector{require<double>(n, b, "reflectance_db"), read<std::string>(n, b, "note", "")};
  }
  if (type == "connector") {
    allow_keys(n, b, {"type", "loss_db", "reflectance_db", "count"});
    return Connector{read<double>(n, b, "loss_db", 0.5), read<double>(n, b, "reflectance_db", -35.0),
                     read<std::size_t>(n, b, "count", 1)};
  }
  throw ConfigError("config: unknown device type '" + type + "' at " + where(n, b));
}

}  // namespace config_detail

inline ScenarioConfig parse_config(const std::string& text) {
  using namespace config_detail;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(std::string("config: YAML syntax error: ") + e.what());
  }
  if (!root || !root.IsMap()) throw ConfigError("config: top level must be a mapping");
  allow_keys(root, "", {"name", "topology", "noise", "servo", "plan", "filters", "detection",
                        "rls", "polarization", "run", "analysis", "planner", "slip_model"});
  ScenarioConfig c;
  c.name = read<std::string>(root, "", "name", "scenario");
  c.topology.name = c.name;

  if (const auto n = root["noise"]) {
    if (!n.IsMap()) throw ConfigError("config: " + where(n, "noise") + " must be a mapping");
    for (const auto& kv : n) {
      const auto key = kv.first.as<std::string>();
      c.noise[key] = parse_profile(kv.second, "noise." + key);
    }
  }

  const auto topo = root["topology"];
  if (!topo) throw ConfigError("config: missing block 'topology'");
  allow_keys(topo, "topology", {"group_delay_s_per_km", "devices"});
  c.group_delay_s_per_km = read<double>(topo, "topology", "group_delay_s_per_km",
                                        kDefaultGroupDelayPerKm);
  if (!(c.group_delay_s_per_km > 0.0)) {
    throw ConfigError("config: topology.group_delay_s_per_km must be > 0");
  }
  const auto devs = topo["devices"];
  if (!devs || !devs.IsSequence()) {
    throw ConfigError("config: " + where(topo, "topology.devices") + " must be a list");
  }
  for (const auto& d : devs) {
    std::string ref;
    Device dev = parse_device(d, ref);
    if (auto* s = std::get_if<Span>(&dev)) {
      if (ref.empty()) {
        s->profile.h[-2] = 0.0;
      } else {
        auto it = c.noise.find(ref);
        if (it == c.noise.end()) {
          throw ConfigError("config: span noise '" + ref + "' not defined in the noise block, " +
                            where(d, "topology.devices.noise"));
        }
        s->profile = it->second;
      }
    }
    c.topology.devices.push_back(std::move(dev));
    c.span_noise.push_back(ref);
  }
  try {
    validate(c.topology);
  } catch (const ConfigError& e) {
    throw ConfigError("config: " + where(devs, "topology.devices") + ": " + e.what());
  }

  if (const auto s = root["servo"]) {
    const std::string b = "servo";
    allow_keys(s, b, {"divider_n", "fast", "slow", "fast_bw_hz", "slow_bw_hz", "tracking_bw_hz",
                      "loop_delay_s", "tune"});
    c.servo.divider_n = read<int>(s, b, "divider_n", 152);
    c.servo.fast_bw = read<double>(s, b, "fast_bw_hz", 100e3);
    c.servo.slow_bw = read<double>(s, b, "slow_bw_hz", 0.5);
    c.servo.tracking_bw = read<double>(s, b, "tracking_bw_hz", 100e3);
    c.loop_delay_s = maybe<double>(s, b, "loop_delay_s");
    for (auto [key, path] : {std::pair{"fast", Path::Fast}, std::pair{"slow", Path::Slow}}) {
      if (const auto g = s[key]) {
        allow_keys(g, b + "." + key, {"kp_hz_per_rad", "ki_hz_per_rad_s"});
        c.servo.gains(path).kp = read<double>(g, b + "." + key, "kp_hz_per_rad", 0.0);
        c.servo.gains(path).ki = read<double>(g, b + "." + key, "ki_hz_per_rad_s", 0.0);
      }
    }
    if (const auto t = s["tune"]) {
      allow_keys(t, b + ".tune", {"zero_ratio", "gain_margin_db"});
      c.tune = ServoTune{read<double>(t, b + ".tune", "zero_ratio", 0.05),
                         read<double>(t, b + ".tune", "gain_margin_db", 12.0)};
      if (s["fast"]) {
        throw ConfigError("config: servo.fast gains and servo.tune are mutually exclusive, " +
                          where(t, "servo.tune"));
      }
    }
    try {
      validate(c.servo);
    } catch (const ConfigError& e) {
      throw ConfigError("config: " + where(s, b) + ": " + e.what());
    }
  }

  if (const auto p = root["plan"]) {
    allow_keys(p, "plan", {"aom1_hz", "rls_lock_offset_hz", "short_link_aom_hz"});
    c.plan.aom1_hz = read<double>(p, "plan", "aom1_hz", 39e6);
    c.plan.rls_lock_offset_hz = read<double>(p, "plan", "rls_lock_offset_hz", 74e6);
    c.plan.short_link_aom_hz = read<double>(p, "plan", "short_link_aom_hz", 37e6);
  }

  if (const auto f = root["filters"]) {
    allow_keys(f, "filters", {"lock", "roundtrip", "end_to_end"});
    if (f["lock"]) c.filters.lock = parse_chain(f["lock"], "filters.lock");
    if (f["roundtrip"]) c.filters.roundtrip = parse_chain(f["roundtrip"], "filters.roundtrip");
    if (f["end_to_end"]) c.filters.end_to_end = parse_chain(f["end_to_end"], "filters.end_to_end");
  }

  if (const auto d = root["detection"]) {
    allow_keys(d, "detection", {"roundtrip_snr_db_hz", "lock_snr_db_hz"});
    c.detection.roundtrip_snr_db_hz = read<double>(d, "detection", "roundtrip_snr_db_hz", 100.0);
    c.detection.lock_snr_db_hz = read<double>(d, "detection", "lock_snr_db_hz", 100.0);
  }

  if (const auto r = root["rls"]) {
    const std::string b = "rls";
    allow_keys(r, b, {"acquire_level", "reoptimize_level", "detect_level", "capture_range_hz",
                      "scan_step_hz", "pol_step_rad", "max_steps"});
    auto& t = c.rls;
    t.acquire_level = read<double>(r, b, "acquire_level", t.acquire_level);
    t.reoptimize_level = read<double>(r, b, "reoptimize_level", t.reoptimize_level);
    t.detect_level = read<double>(r, b, "detect_level", t.detect_level);
    t.capture_range_hz = read<double>(r, b, "capture_range_hz", t.capture_range_hz);
    t.scan_step_hz = read<double>(r, b, "scan_step_hz", t.scan_step_hz);
    t.pol_step = read<double>(r, b, "pol_step_rad", t.pol_step);
    t.max_steps = read<std::size_t>(r, b, "max_steps", t.max_steps);
    try {
      validate(t);
    } catch (const ConfigError& e) {
      throw ConfigError("config: " + where(r, b) + ": " + e.what());
    }
  }

  if (const auto p = root["polarization"]) {
    const std::string b = "polarization";
    allow_keys(p, b, {"misalignment_rad", "drift_rate_rad_per_sqrt_s", "controller_setting_rad"});
    c.polarization.misalignment_angle = read<double>(p, b, "misalignment_rad", 0.0);
    c.polarization.drift_rate = read<double>(p, b, "drift_rate_rad_per_sqrt_s", 0.0);
    c.polarization.controller_setting =
        read<std::vector<double>>(p, b, "controller_setting_rad", {0.0, 0.0});
    if (c.polarization.controller_setting.empty()) {
      throw ConfigError("config: " + where(p, b + ".controller_setting_rad") + " needs a channel");
    }
  }

  if (const auto r = root["run"]) {
    const std::string b = "run";
    allow_keys(r, b, {"duration_s", "fs_hz", "seed", "output_rate_hz", "compensation", "settle_s",
                      "short_link", "cascade_stages", "rf_wobble_rad", "rf_wobble_hz",
                      "interferometer_drift_rad_per_sqrt_s", "rls_tick_s"});
    auto& x = c.run;
    x.duration_s = read<double>(r, b, "duration_s", x.duration_s);
    x.fs_hz = read<double>(r, b, "fs_hz", x.fs_hz);
    x.seed = read<std::uint64_t>(r, b, "seed", x.seed);
    x.output_rate_hz = read<double>(r, b, "output_rate_hz", x.output_rate_hz);
    x.compensation = read<bool>(r, b, "compensation", x.compensation);
    x.settle_s = read<double>(r, b, "settle_s", x.settle_s);
    x.short_link = read<bool>(r, b, "short_link", x.short_link);
    x.cascade_stages = read<std::size_t>(r, b, "cascade_stages", x.cascade_stages);
    x.rf_wobble_rad = read<double>(r, b, "rf_wobble_rad", x.rf_wobble_rad);
    x.rf_wobble_hz = read<double>(r, b, "rf_wobble_hz", x.rf_wobble_hz);
    x.interferometer_drift_rad_per_sqrt_s =
        read<double>(r, b, "interferometer_drift_rad_per_sqrt_s", 0.0);
    x.rls_tick_s = read<double>(r, b, "rls_tick_s", x.rls_tick_s);
    if (!(x.duration_s > 0.0)) throw ConfigError("config: run.duration_s must be > 0, " + where(r, b));
    if (!(x.fs_hz > 0.0)) throw ConfigError("config: run.fs_hz must be > 0, " + where(r, b));
    if (x.cascade_stages < 1) throw ConfigError("config: run.cascade_stages must be >= 1");
  }

  if (const auto a = root["analysis"]) {
    const std::string b = "analysis";
    allow_keys(a, b, {"taus_s", "prefilter_hz", "psd_segment", "psd_overlap", "carrier_hz"});
    auto& x = c.analysis;
    x.taus_s = read<std::vector<double>>(a, b, "taus_s", x.taus_s);
    x.prefilter_hz = read<double>(a, b, "prefilter_hz", x.prefilter_hz);
    x.psd_segment = read<std::size_t>(a, b, "psd_segment", x.psd_segment);
    x.psd_overlap = read<double>(a, b, "psd_overlap", x.psd_overlap);
    x.carrier_hz = read<double>(a, b, "carrier_hz", x.carrier_hz);
    if (!(x.psd_overlap >= 0.0 && x.psd_overlap < 1.0)) {
      throw ConfigError("config: analysis.psd_overlap must lie in [0, 1)");
    }
  }

  if (const auto p = root["planner"]) {
    const std::string b = "planner";
    allow_keys(p, b, {"launch_power_dbm", "excess_noise_db", "effective_reflectance_db",
                      "extra_loss_db", "marginal_db"});
    auto& x = c.planner;
    x.launch_power_dbm = read<double>(p, b, "launch_power_dbm", x.launch_power_dbm);
    x.excess_noise_db = read<double>(p, b, "excess_noise_db", x.excess_noise_db);
    x.effective_reflectance_db = maybe<double>(p, b, "effective_reflectance_db");
    x.extra_loss_db = read<double>(p, b, "extra_loss_db", x.extra_loss_db);
    x.marginal_db = read<double>(p, b, "marginal_db", x.marginal_db);
    if (x.launch_power_dbm > 0.0) {
      throw ConfigError("config: planner.launch_power_dbm must be <= 0, " + where(p, b));
    }
  }

  if (const auto s = root["slip_model"]) {
    allow_keys(s, "slip_model", {"front_factor", "exponent"});
    SlipModel m;
    m.front_factor = require<double>(s, "slip_model", "front_factor");
    m.exponent = require<double>(s, "slip_model", "exponent");
    m.calibrated = true;
    c.slip_model = m;
  }
  return c;
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

inline ScenarioConfig load_preset(const std::string& name) {
  return parse_config(preset_text(name));
}

namespace config_detail {

inline void emit_profile(YAML::Emitter& e, const NoiseProfile& p) {
  e << YAML::BeginMap << YAML::Key << "h" << YAML::Value << YAML::Flow << YAML::BeginMap;
  for (const auto& [a, c] : p.h) e << YAML::Key << std::to_string(a) << YAML::Value << num(c);
  e << YAML::EndMap;
  if (p.f_low) e << YAML::Key << "f_low_hz" << YAML::Value << num(*p.f_low);
  if (p.f_high) e << YAML::Key << "f_high_hz" << YAML::Value << num(*p.f_high);
  if (!p.schedule.empty()) {
    e << YAML::Key << "schedule" << YAML::Value << YAML::BeginSeq;
    for (const auto& s : p.schedule) {
      e << YAML::Flow << YAML::BeginMap << YAML::Key << "t_start_s" << YAML::Value
        << num(s.t_start_s) << YAML::Key << "factor" << YAML::Value << num(s.factor)
        << YAML::EndMap;
    }
    e << YAML::EndSeq;
  }
  e << YAML::EndMap;
}

inline void emit_chain(YAML::Emitter& e, const FilterChainSpec& c) {
  e << YAML::BeginSeq;
  for (const auto& s : c.stages) {
    e << YAML::Flow << YAML::BeginMap << YAML::Key << "center_hz" << YAML::Value
      << num(s.center_hz) << YAML::Key << "bandwidth_hz" << YAML::Value << num(s.bandwidth_hz)
      << YAML::EndMap;
  }
  e << YAML::EndSeq;
}

}  // namespace config_detail

inline std::string emit_config(const ScenarioConfig& c) {
  using config_detail::num;
  YAML::Emitter e;
  auto kv = [&](const char* k, const std::string& v) { e << YAML::Key << k << YAML::Value << v; };
  e << YAML::BeginMap;
  kv("name", c.name);

  e << YAML::Key << "noise" << YAML::Value << YAML::BeginMap;
  for (const auto& [k, p] : c.noise) {
    e << YAML::Key << k << YAML::Value;
    config_detail::emit_profile(e, p);
  }
  e << YAML::EndMap;

  e << YAML::Key << "topology" << YAML::Value << YAML::BeginMap;
  kv("group_delay_s_per_km", num(c.group_delay_s_per_km));
  e << YAML::Key << "devices" << YAML::Value << YAML::BeginSeq;
  for (std::size_t i = 0; i < c.topology.devices.size(); ++i) {
    const auto& d = c.topology.devices[i];
    e << YAML::Flow << YAML::BeginMap;
    kv("type", device_kind(d));
    if (const auto* s = std::get_if<Span>(&d)) {
      kv("length_km", num(s->length_km));
      kv("loss_db_per_km", num(s->loss_db_per_km));
      kv("K", std::to_string(s->k));
      if (i < c.span_noise.size() && !c.span_noise[i].empty()) kv("noise", c.span_noise[i]);
    } else if (const auto* o = std::get_if<Oadm>(&d)) {
      kv("insertion_loss_db", num(o->insertion_loss_db));
    } else if (const auto* a = std::get_if<Edfa>(&d)) {
      kv("gain_db", num(a->gain_db));
    } else if (const auto* m = std::get_if<Aom>(&d)) {
      kv("shift_hz", num(m->shift_hz));
    } else if (const auto* r = std::get_if<Reflector>(&d)) {
      kv("reflectance_db", num(r->reflectance_db));
      if (!r->note.empty()) kv("note", r->note);
    } else if (const auto* k = std::get_if<Connector>(&d)) {
      kv("loss_db", num(k->loss_db));
      kv("reflectance_db", num(k->reflectance_db));
      kv("count", std::to_string(k->count));
    }
    e << YAML::EndMap;
  }
  e << YAML::EndSeq << YAML::EndMap;

  e << YAML::Key << "servo" << YAML::Value << YAML::BeginMap;
  kv("divider_n", std::to_string(c.servo.divider_n));
  if (!c.tune) {
    for (auto [key, path] : {std::pair{"fast", Path::Fast}, std::pair{"slow", Path::Slow}}) {
      e << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginMap;
      kv("kp_hz_per_rad", num(c.servo.gains(path).kp));
      kv("ki_hz_per_rad_s", num(c.servo.gains(path).ki));
      e << YAML::EndMap;
    }
  } else {
    e << YAML::Key << "slow" << YAML::Value << YAML::Flow << YAML::BeginMap;
    kv("kp_hz_per_rad", num(c.servo.gains(Path::Slow).kp));
    kv("ki_hz_per_rad_s", num(c.servo.gains(Path::Slow).ki));
    e << YAML::EndMap;
    e << YAML::Key << "tune" << YAML::Value << YAML::Flow << YAML::BeginMap;
    kv("zero_ratio", num(c.tune->zero_ratio));
    kv("gain_margin_db", num(c.tune->gain_margin_db));
    e << YAML::EndMap;
  }
  kv("fast_bw_hz", num(c.servo.fast_bw));
  kv("slow_bw_hz", num(c.servo.slow_bw));
  kv("tracking_bw_hz", num(c.servo.tracking_bw));
  if (c.loop_delay_s) kv("loop_delay_s", num(*c.loop_delay_s));
  e << YAML::EndMap;

  e << YAML::Key << "plan" << YAML::Value << YAML::BeginMap;
  kv("aom1_hz", num(c.plan.aom1_hz));
  kv("rls_lock_offset_hz", num(c.plan.rls_lock_offset_hz));
  kv("short_link_aom_hz", num(c.plan.short_link_aom_hz));
  e << YAML::EndMap;

  e << YAML::Key << "filters" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "lock" << YAML::Value;
  config_detail::emit_chain(e, c.filters.lock);
  e << YAML::Key << "roundtrip" << YAML::Value;
  config_detail::emit_chain(e, c.filters.roundtrip);
  e << YAML::Key << "end_to_end" << YAML::Value;
  config_detail::emit_chain(e, c.filters.end_to_end);
  e << YAML::EndMap;

  e << YAML::Key << "detection" << YAML::Value << YAML::BeginMap;
  kv("roundtrip_snr_db_hz", num(c.detection.roundtrip_snr_db_hz));
  kv("lock_snr_db_hz", num(c.detection.lock_snr_db_hz));
  e << YAML::EndMap;

  e << YAML::Key << "rls" << YAML::Value << YAML::BeginMap;
  kv("acquire_level", num(c.rls.acquire_level));
  kv("reoptimize_level", num(c.rls.reoptimize_level));
  kv("detect_level", num(c.rls.detect_level));
  kv("capture_range_hz", num(c.rls.capture_range_hz));
  kv("scan_step_hz", num(c.rls.scan_step_hz));
  kv("pol_step_rad", num(c.rls.pol_step));
  kv("max_steps", std::to_string(c.rls.max_steps));
  e << YAML::EndMap;

  e << YAML::Key << "polarization" << YAML::Value << YAML::BeginMap;
  kv("misalignment_rad", num(c.polarization.misalignment_angle));
  kv("drift_rate_rad_per_sqrt_s", num(c.polarization.drift_rate));
  e << YAML::Key << "controller_setting_rad" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (double v : c.polarization.controller_setting) e << num(v);
  e << YAML::EndSeq << YAML::EndMap;

  e << YAML::Key << "run" << YAML::Value << YAML::BeginMap;
  kv("duration_s", num(c.run.duration_s));
  kv("fs_hz", num(c.run.fs_hz));
  kv("seed", std::to_string(c.run.seed));
  kv("output_rate_hz", num(c.run.output_rate_hz));
  kv("compensation", c.run.compensation ? "true" : "false");
  kv("settle_s", num(c.run.settle_s));
  kv("short_link", c.run.short_link ? "true" : "false");
  kv("cascade_stages", std::to_string(c.run.cascade_stages));
  kv("rf_wobble_rad", num(c.run.rf_wobble_rad));
  kv("rf_wobble_hz", num(c.run.rf_wobble_hz));
  kv("interferometer_drift_rad_per_sqrt_s", num(c.run.interferometer_drift_rad_per_sqrt_s));
  kv("rls_tick_s", num(c.run.rls_tick_s));
  e << YAML::EndMap;

  e << YAML::Key << "analysis" << YAML::Value << YAML::BeginMap;
  e << YAML::Key << "taus_s" << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (double t : c.analysis.taus_s) e << num(t);
  e << YAML::EndSeq;
  kv("prefilter_hz", num(c.analysis.prefilter_hz));
  kv("psd_segment", std::to_string(c.analysis.psd_segment));
  kv("psd_overlap", num(c.analysis.psd_overlap));
  kv("carrier_hz", num(c.analysis.carrier_hz));
  e << YAML::EndMap;

  e << YAML::Key << "planner" << YAML::Value << YAML::BeginMap;
  kv("launch_power_dbm", num(c.planner.launch_power_dbm));
  kv("excess_noise_db", num(c.planner.excess_noise_db));
  if (c.planner.effective_reflectance_db) {
    kv("effective_reflectance_db", num(*c.planner.effective_reflectance_db));
  }
  kv("extra_loss_db", num(c.planner.extra_loss_db));
  kv("marginal_db", num(c.planner.marginal_db));
  e << YAML::EndMap;

  if (c.slip_model) {
    e << YAML::Key << "slip_model" << YAML::Value << YAML::BeginMap;
    kv("front_factor", num(c.slip_model->front_factor));
    kv("exponent", num(c.slip_model->exponent));
    e << YAML::EndMap;
  }
  e << YAML::EndMap;
  return std::string(e.c_str()) + "\n";
}

// Topology as used by the simulator: with cascade_stages = N it is one of
// N identical stages, and tuning uses that stage's delay.
inline Scenario resolve(const ScenarioConfig& c) {
  Scenario sc;
  sc.topology = c.topology;
  sc.plan = c.plan;
  sc.servo = c.servo;
  double aom = 0.0;
  bool has_aom = false;
  for (const auto& d : c.topology.devices) {
    if (const auto* a = std::get_if<Aom>(&d)) {
      aom += a->shift_hz;
      has_aom = true;
    }
  }
  if (has_aom && aom != c.plan.aom1_hz) {
    throw ConfigError("config: AOM devices in the topology sum to " + config_detail::num(aom) +
                      " Hz but plan.aom1_hz is " + config_detail::num(c.plan.aom1_hz));
  }
  const double one_way = total_length_km(c.topology) * c.group_delay_s_per_km;
  sc.servo.loop_delay = c.loop_delay_s.value_or(one_way);
  if (c.tune) {
    const auto t = tune_compensation(2.0 * one_way, c.run.fs_hz, c.servo.divider_n,
                                     c.tune->zero_ratio, c.tune->gain_margin_db);
    sc.servo.gains(Path::Fast) = t.gains;
  }
  auto& o = sc.options;
  o.fs = c.run.fs_hz;
  o.duration_s = c.run.duration_s;
  o.seed = c.run.seed;
  o.compensation = c.run.compensation;
  o.output_rate_hz = c.run.output_rate_hz;
  o.prefilter_hz = c.analysis.prefilter_hz;
  o.settle_s = c.run.settle_s;
  o.short_link = c.run.short_link;
  o.group_delay_s_per_km = c.group_delay_s_per_km;
  o.detection = c.detection;
  o.rf_wobble = {c.run.rf_wobble_rad, c.run.rf_wobble_hz};
  o.interferometer_drift = c.run.interferometer_drift_rad_per_sqrt_s;
  o.polarization = c.polarization;
  o.rls = c.rls;
  o.rls_tick_s = c.run.rls_tick_s;
  validate(sc);
  return sc;
}

inline DetectorParams detector_params(const ScenarioConfig& c) {
  DetectorParams d;
  d.launch_power_dbm = c.planner.launch_power_dbm;
  d.excess_noise_db = c.planner.excess_noise_db;
  d.carrier_hz = c.analysis.carrier_hz;
  d.extra_loss_db = c.planner.extra_loss_db;
  d.lock_noise_bw_hz = apply_filter_chain(c.filters.lock);
  d.link_noise_bw_hz = apply_filter_chain(c.filters.roundtrip);
  d.marginal_db = c.planner.marginal_db;
  return d;
}

}  // namespace fiberlink
