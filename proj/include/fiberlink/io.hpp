#pragma once

// CSV tables, analysis products and the output bundle (needs OpenSSL).

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "fiberlink/analysis.hpp"
#include "fiberlink/config.hpp"
#include "fiberlink/core.hpp"
#include "fiberlink/planner.hpp"
#include "fiberlink/station.hpp"

namespace fiberlink {

inline constexpr const char* kVersion = "0.1.0";

inline std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read '" + p.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + p.string() + "'");
  out << s;
}

// run.csv: one row per output sample; events column lists the kinds that
// occurred since the previous row.
inline std::string run_csv(const RunRecord& r) {
  std::ostringstream os;
  os << "t_s,end_to_end_phase_rad,end_to_end_unfiltered_rad,correction_phase_rad,"
        "free_running_phase_rad,events\n";
  const auto& e2e = r.end_to_end_phase;
  std::size_t ev = 0;
  for (std::size_t i = 0; i < e2e.size(); ++i) {
    const double t = e2e.time_at(i);
    std::string flags;
    while (ev < r.events.size() && r.events[ev].t <= t) {
      if (!flags.empty()) flags += ';';
      flags += to_string(r.events[ev].kind);
      ++ev;
    }
    os << fmt(t) << ',' << fmt(e2e.samples[i]) << ',' << fmt(r.end_to_end_unfiltered.samples[i])
       << ',' << fmt(r.correction_phase.samples[i]) << ',' << fmt(r.free_running_phase.samples[i])
       << ',' << flags << '\n';
  }
  return os.str();
}

inline std::string events_csv(const RunRecord& r) {
  std::ostringstream os;
  os << "t_s,kind,detail\n";
  for (const auto& e : r.events) os << fmt(e.t) << ',' << to_string(e.kind) << ',' << e.detail << '\n';
  return os.str();
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("csv: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
  bool has(const std::string& name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    auto cells = split_csv_line(line);
    if (t.header.empty()) {
      t.header = cells;
      continue;
    }
    if (cells.size() != t.header.size()) {
      throw ConfigError("csv line " + std::to_string(lineno) + ": expected " +
                        std::to_string(t.header.size()) + " fields, got " +
                        std::to_string(cells.size()));
    }
    t.rows.push_back(std::move(cells));
  }
  if (t.header.empty()) throw ConfigError("csv: empty file");
  return t;
}

inline double parse_number(const std::string& s, std::size_t row) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw ConfigError("csv row " + std::to_string(row + 1) + ": not a number: '" + s + "'");
  }
  return v;
}

// Accepts a run.csv from `simulate` or any file with columns t_s and one
// phase column (end_to_end_phase_rad or phase_rad), uniformly sampled.
inline PhaseSeries read_phase_column(const CsvTable& t, const std::string& column) {
  if (t.rows.size() < 2) throw ConfigError("csv: need at least two rows");
  const auto ct = t.column("t_s");
  const auto cp = t.column(column);
  PhaseSeries s;
  std::vector<double> time;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    time.push_back(parse_number(t.rows[i][ct], i));
    s.samples.push_back(parse_number(t.rows[i][cp], i));
  }
  const double dt = (time.back() - time.front()) / static_cast<double>(time.size() - 1);
  if (!(dt > 0.0)) throw ConfigError("csv: t_s must increase");
  for (std::size_t i = 1; i < time.size(); ++i) {
    if (std::abs(time[i] - time[i - 1] - dt) > 1e-6 * dt) {
      throw ConfigError("csv: t_s is not uniformly spaced near row " + std::to_string(i + 1));
    }
  }
  double fs = 1.0 / dt;
  if (std::abs(fs - std::round(fs)) < 1e-6 * fs) fs = std::round(fs);
  s.fs = fs;
  s.t0 = time.front();
  return s;
}

struct AnalysisProducts {
  std::vector<AdevPoint> adev_filtered;
  std::vector<AdevPoint> adev_unfiltered;
  PsdEstimate psd;
  std::vector<std::string> notices;
};

// The end-to-end series is already through the prefilter; the unfiltered
// one is optional. Gate = one output sample.
inline AnalysisProducts analyze_series(const PhaseSeries& filtered,
                                       const std::optional<PhaseSeries>& unfiltered,
                                       const AnalysisConfig& a) {
  AnalysisProducts p;
  const double gate = 1.0 / filtered.fs;
  auto y = pi_counter(filtered, gate, std::nullopt, a.carrier_hz);
  p.adev_filtered = overlapping_adev(y, a.taus_s, &p.notices);
  const PhaseSeries& for_psd = unfiltered ? *unfiltered : filtered;
  if (unfiltered) {
    auto yu = pi_counter(*unfiltered, gate, std::nullopt, a.carrier_hz);
    p.adev_unfiltered = overlapping_adev(yu, a.taus_s, &p.notices);
  }
  const std::size_t seg = std::min(a.psd_segment, for_psd.size());
  if (seg >= 8) {
    p.psd = welch_psd(for_psd, seg, a.psd_overlap, Detrend::Linear);
  } else {
    p.notices.push_back("record too short for a PSD estimate");
  }
  return p;
}

inline std::string adev_csv(const AnalysisProducts& p) {
  std::ostringstream os;
  os << "series,tau_s,sigma_y,n_samples,ci_low,ci_high\n";
  for (const auto& [name, pts] : {std::pair<const char*, const std::vector<AdevPoint>*>{
                                      "filtered", &p.adev_filtered},
                                  {"unfiltered", &p.adev_unfiltered}}) {
    for (const auto& q : *pts) {
      os << name << ',' << fmt(q.tau) << ',' << fmt(q.sigma_y) << ',' << q.n_samples << ','
         << fmt(q.ci_low) << ',' << fmt(q.ci_high) << '\n';
    }
  }
  return os.str();
}

inline std::string psd_csv(const AnalysisProducts& p) {
  std::ostringstream os;
  os << "freq_hz,psd_rad2_per_hz\n";
  for (std::size_t i = 0; i < p.psd.freqs.size(); ++i) {
    os << fmt(p.psd.freqs[i]) << ',' << fmt(p.psd.values[i]) << '\n';
  }
  return os.str();
}

inline AnalysisProducts analyze_run_csv(const std::string& text, const AnalysisConfig& a) {
  const auto t = parse_csv(text);
  if (t.rows.empty()) throw ConfigError("csv: no data rows");
  const std::string main = t.has("end_to_end_phase_rad") ? "end_to_end_phase_rad" : "phase_rad";
  auto filtered = read_phase_column(t, main);
  std::optional<PhaseSeries> unfiltered;
  if (t.has("end_to_end_unfiltered_rad")) {
    unfiltered = read_phase_column(t, "end_to_end_unfiltered_rad");
  }
  return analyze_series(filtered, unfiltered, a);
}

inline std::string plan_report(const ScenarioConfig& c, int& exit_code) {
  std::ostringstream os;
  exit_code = 0;
  const auto ledger = budget(c.topology);
  os << "== budget (one way) ==\n"
     << "passive loss  " << fmt(ledger.total_loss_db) << " dB\n"
     << "total gain    " << fmt(ledger.total_gain_db) << " dB\n"
     << "net           " << fmt(ledger.net_attenuation_db) << " dB\n"
     << "round trip    " << fmt(ledger.round_trip_net_db) << " dB\n";
  const auto osc = oscillation_margin(c.topology, c.planner.effective_reflectance_db);
  os << "== oscillation ==\n";
  for (const auto& a : osc.amps) {
    os << "edfa #" << a.amp_index << " gain " << fmt(a.gain_db) << " dB, worst loop "
       << fmt(a.loop_gain_db) << " dB, max safe gain " << fmt(a.max_safe_gain_db) << " dB"
       << (a.oscillates ? "  OSCILLATES" : "") << '\n';
  }
  if (osc.oscillation_flagged) exit_code = 3;
  const auto spurs = frequency_plan(c.plan, c.filters.roundtrip, c.filters.end_to_end);
  os << "== frequency plan ==\n";
  for (const auto& s : spurs.signals) {
    os << "signal " << s.name << ' ' << fmt(s.freq_hz) << " Hz, filter " << fmt(s.filter_bw_hz)
       << " Hz\n";
  }
  for (const auto& s : spurs.spurs) os << "spur " << fmt(s.beat_freq_hz) << " Hz: " << s.source << '\n';
  for (const auto& s : spurs.collisions) os << "collision: " << s << '\n';
  os << "spur verdict: " << (spurs.pass ? "pass" : "fail") << '\n';
  if (!spurs.pass) exit_code = 3;
  std::vector<FrequencyPlan> plans(c.run.cascade_stages, c.plan);
  const auto cas = cascade(plans);
  for (std::size_t i = 0; i < cas.stages.size(); ++i) {
    const auto& s = cas.stages[i];
    os << "stage " << i << ": round trip " << s.roundtrip_beat_hz << " Hz, end to end "
       << s.end_to_end_beat_hz << " Hz, remote offset " << s.rls_output_hz << " Hz, output "
       << s.stage_output_hz << " Hz, rf coefficient " << s.rf_coefficient.num << '/'
       << s.rf_coefficient.den << '\n';
  }
  for (const auto& f : cas.flags) os << "flag: " << f << '\n';
  os << "== feasibility ==\n";
  if (!c.slip_model) {
    throw ConfigError("plan: no slip_model block; run `fiberlink calibrate` and add its output");
  }
  const auto feas = feasibility(ledger, detector_params(c), *c.slip_model);
  os << "received power " << fmt(feas.received_power_dbm) << " dBm\n";
  for (const auto& l : feas.loops) {
    os << l.name << ": snr " << fmt(l.snr_db_hz) << " dB/Hz, threshold " << fmt(l.threshold_db_hz)
       << " dB/Hz, margin " << fmt(l.margin_db) << " dB, slip rate " << fmt(l.slip_rate) << " /s\n";
  }
  os << "verdict: " << to_string(feas.verdict) << '\n';
  if (feas.verdict == Verdict::Fail) exit_code = 3;
  return os.str();
}

struct BundleResult {
  std::map<std::string, std::string> files;  // name -> content
  bool unstable = false;
};

// Everything simulate writes, in memory. Analysis is done on the series as
// parsed back from run.csv so that a later `analyze` gives the same numbers.
inline BundleResult build_bundle(const ScenarioConfig& cfg) {
  const Scenario sc = resolve(cfg);
  const RunRecord rec = run_cascade(sc, cfg.run.cascade_stages);
  BundleResult b;
  b.unstable = rec.unstable;
  b.files["config.yaml"] = emit_config(cfg);
  b.files["run.csv"] = run_csv(rec);
  b.files["events.csv"] = events_csv(rec);
  const auto products = analyze_run_csv(b.files["run.csv"], cfg.analysis);
  b.files["adev.csv"] = adev_csv(products);
  b.files["psd.csv"] = psd_csv(products);
  std::ostringstream rep;
  rep << "scenario " << cfg.name << "\n"
      << "seed " << cfg.run.seed << "\n"
      << "one-way delay " << fmt(rec.one_way_delay) << " s\n"
      << "kp " << fmt(sc.servo.gains(Path::Fast).kp) << " Hz/rad, ki "
      << fmt(sc.servo.gains(Path::Fast).ki) << " Hz/(rad s)\n"
      << "samples " << rec.end_to_end_phase.size() << " at " << fmt(rec.end_to_end_phase.fs)
      << " Hz\n"
      << "slips " << rec.slip_count << "\n"
      << "events " << rec.events.size() << "\n"
      << "unstable " << (rec.unstable ? "yes" : "no") << "\n";
  if (auto w = delay_stability_warning(sc.servo)) rep << "warning: " << *w << "\n";
  for (const auto& q : products.adev_filtered) {
    rep << "adev(" << fmt(q.tau) << " s) filtered " << fmt(q.sigma_y) << "\n";
  }
  for (const auto& q : products.adev_unfiltered) {
    rep << "adev(" << fmt(q.tau) << " s) unfiltered " << fmt(q.sigma_y) << "\n";
  }
  for (const auto& n : products.notices) rep << "notice: " << n << "\n";
  b.files["report.txt"] = rep.str();
  nlohmann::ordered_json m;
  m["version"] = kVersion;
  m["config_sha256"] = sha256_hex(b.files["config.yaml"]);
  m["seed"] = cfg.run.seed;
  for (const auto& [name, content] : b.files) m["files"][name] = sha256_hex(content);
  b.files["manifest.json"] = m.dump(2) + "\n";
  return b;
}

inline void write_bundle(const BundleResult& b, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, content] : b.files) write_file(dir / name, content);
}

}  // namespace fiberlink
