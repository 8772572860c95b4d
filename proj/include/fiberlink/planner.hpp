#pragma once

// Static design checks: loss ledger, amplifier oscillation, RF spurs,
// SNR -> slip feasibility.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fiberlink/control.hpp"
#include "fiberlink/core.hpp"
#include "fiberlink/optics.hpp"
#include "fiberlink/station.hpp"

namespace fiberlink {

struct BudgetEntry {
  std::size_t index = 0;
  std::string device;
  double loss_db = 0.0;
  double gain_db = 0.0;
};

struct BudgetLedger {
  std::vector<BudgetEntry> entries;
  double total_loss_db = 0.0;
  double total_gain_db = 0.0;
  double net_attenuation_db = 0.0;
  double round_trip_net_db = 0.0;
};

inline BudgetLedger budget(const LinkTopology& t) {
  validate(t);
  BudgetLedger b;
  for (std::size_t i = 0; i < t.devices.size(); ++i) {
    const auto& d = t.devices[i];
    BudgetEntry e{i, device_kind(d), device_loss_db(d), device_gain_db(d)};
    b.total_loss_db += e.loss_db;
    b.total_gain_db += e.gain_db;
    b.entries.push_back(std::move(e));
  }
  // ledger resolution 1e-9 dB, so that 0.1 dB steps add up exactly
  auto q = [](double v) { return std::round(v * 1e9) / 1e9; };
  b.total_loss_db = q(b.total_loss_db);
  b.total_gain_db = q(b.total_gain_db);
  b.net_attenuation_db = q(b.total_loss_db - b.total_gain_db);
  b.round_trip_net_db = 2.0 * b.net_attenuation_db;
  return b;
}

struct AmpMargin {
  std::size_t amp_index = 0;  // device index of the EDFA
  double gain_db = 0.0;
  std::optional<SpurPair> worst_pair;
  double loop_gain_db = -std::numeric_limits<double>::infinity();
  double max_safe_gain_db = std::numeric_limits<double>::infinity();
  bool oscillates = false;
};

struct OscillationReport {
  std::vector<AmpMargin> amps;
  std::vector<SpurPair> pairs;
  bool oscillation_flagged = false;
};

// With effective_reflectance_db set, a lumped reflector of that value is
// assumed right before and right after every EDFA (stands in for
// distributed backscatter plus nearby connectors).
inline OscillationReport oscillation_margin(const LinkTopology& topology,
                                            std::optional<double> effective_reflectance_db = {}) {
  validate(topology);
  LinkTopology t = topology;
  std::vector<std::size_t> original;  // index in the caller's topology
  if (effective_reflectance_db) {
    if (!(*effective_reflectance_db <= 0.0)) {
      throw ConfigError("effective_reflectance_db must be <= 0");
    }
    t.devices.clear();
    for (std::size_t i = 0; i < topology.devices.size(); ++i) {
      const auto& d = topology.devices[i];
      const bool amp = std::holds_alternative<Edfa>(d);
      if (amp) {
        t.devices.push_back(Reflector{*effective_reflectance_db, "effective"});
        original.push_back(i);
      }
      t.devices.push_back(d);
      original.push_back(i);
      if (amp) {
        t.devices.push_back(Reflector{*effective_reflectance_db, "effective"});
        original.push_back(i);
      }
    }
  } else {
    for (std::size_t i = 0; i < t.devices.size(); ++i) original.push_back(i);
  }
  OscillationReport rep;
  rep.pairs = spur_pairs(t);
  for (std::size_t a = 0; a < t.devices.size(); ++a) {
    const auto* e = std::get_if<Edfa>(&t.devices[a]);
    if (!e) continue;
    AmpMargin m;
    m.amp_index = original[a];
    m.gain_db = e->gain_db;
    for (const auto& p : rep.pairs) {
      if (!(p.first < a && a < p.second)) continue;
      const double lg = p.loop_gain_db();
      if (lg > m.loop_gain_db) {
        m.loop_gain_db = lg;
        SpurPair q = p;
        q.first = original[p.first];
        q.second = original[p.second];
        m.worst_pair = q;
      }
      // the amp's gain enters the loop twice
      m.max_safe_gain_db = std::min(m.max_safe_gain_db, e->gain_db - lg / 2.0);
    }
    m.oscillates = m.loop_gain_db >= 0.0;
    rep.oscillation_flagged = rep.oscillation_flagged || m.oscillates;
    rep.amps.push_back(std::move(m));
  }
  for (auto& p : rep.pairs) {
    p.first = original[p.first];
    p.second = original[p.second];
  }
  return rep;
}

struct SpurRow {
  std::string source;
  double beat_freq_hz = 0.0;
};

struct SignalRow {
  std::string name;
  double freq_hz = 0.0;
  double filter_bw_hz = 0.0;
};

struct SpurTable {
  std::vector<SpurRow> spurs;
  std::vector<SignalRow> signals;
  bool pass = true;
  double worst_separation_hz = std::numeric_limits<double>::infinity();
  std::vector<std::string> collisions;
};

// Single-reflection spurs at the local round-trip detector.
inline SpurTable frequency_plan(const FrequencyPlan& plan, const FilterChainSpec& roundtrip_chain,
                                const FilterChainSpec& end_to_end_chain,
                                const std::vector<SpurRow>& extra_spurs = {}) {
  for (double f : {plan.aom1_hz, plan.rls_lock_offset_hz, plan.short_link_aom_hz}) {
    if (!std::isfinite(f)) throw ConfigError("frequency plan: non-finite frequency");
  }
  if (plan.aom1_hz == 0.0) throw ConfigError("frequency plan: aom1_hz must be nonzero");
  SpurTable t;
  t.spurs.push_back({"reflection before the remote station, AOM1 passed twice",
                     std::abs(2.0 * plan.aom1_hz)});
  t.spurs.push_back({"leakage without AOM1 passage", 0.0});
  for (const auto& s : extra_spurs) t.spurs.push_back({s.source, std::abs(s.beat_freq_hz)});
  t.signals.push_back({"round-trip beat", std::abs(plan.roundtrip_beat_hz()),
                       apply_filter_chain(roundtrip_chain)});
  t.signals.push_back({"end-to-end beat", std::abs(plan.end_to_end_beat_hz()),
                       apply_filter_chain(end_to_end_chain)});
  for (const auto& sig : t.signals) {
    for (const auto& sp : t.spurs) {
      const double sep = std::abs(sig.freq_hz - sp.beat_freq_hz);
      t.worst_separation_hz = std::min(t.worst_separation_hz, sep - sig.filter_bw_hz / 2.0);
      if (!(sep > sig.filter_bw_hz / 2.0)) {
        t.pass = false;
        t.collisions.push_back(sp.source + " at " + std::to_string(sp.beat_freq_hz) +
                               " Hz falls inside the " + sig.name + " filter");
      }
    }
  }
  return t;
}

inline constexpr double kPlanck = 6.62607015e-34;
inline constexpr double kMaxSlipRate = 1.0e-4;

struct DetectorParams {
  double launch_power_dbm = 0.0;
  double excess_noise_db = 7.4;
  double carrier_hz = kDefaultCarrierHz;
  double extra_loss_db = 0.0;
  double lock_noise_bw_hz = 14.0e6;
  double link_noise_bw_hz = 4.0e6;
  double marginal_db = 3.0;
};

enum class Verdict { Pass, MarginalPass, Fail };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::MarginalPass: return "marginal-pass";
    case Verdict::Fail: return "fail";
  }
  return "?";
}

struct LoopFeasibility {
  std::string name;
  double snr_db_hz = 0.0;
  double threshold_db_hz = 0.0;
  double margin_db = 0.0;
  double slip_rate = 0.0;
};

struct FeasibilityReport {
  double received_power_dbm = 0.0;
  std::vector<LoopFeasibility> loops;
  Verdict verdict = Verdict::Pass;
};

// Shot-noise limited heterodyne: SNR density = P / (h nu), less the excess
// noise figure. Both beats see one pass of the net attenuation.
inline double snr_density_db_hz(double received_power_dbm, double carrier_hz,
                                double excess_noise_db) {
  const double p_w = std::pow(10.0, received_power_dbm / 10.0) * 1e-3;
  return power_to_db(p_w / (kPlanck * carrier_hz)) - excess_noise_db;
}

inline FeasibilityReport feasibility(const BudgetLedger& ledger, const DetectorParams& det,
                                     const SlipModel& model) {
  if (!model.calibrated) {
    throw ConfigError("feasibility: slip model is not calibrated; run `fiberlink calibrate` and "
                      "copy the constants into the slip_model block");
  }
  if (det.launch_power_dbm > 0.0) throw ConfigError("feasibility: launch power must be <= 0 dBm");
  FeasibilityReport r;
  r.received_power_dbm = det.launch_power_dbm - ledger.net_attenuation_db - det.extra_loss_db;
  const double snr = snr_density_db_hz(r.received_power_dbm, det.carrier_hz, det.excess_noise_db);
  double worst = std::numeric_limits<double>::infinity();
  bool fail = false;
  for (const auto& [name, bw] : {std::pair<const char*, double>{"laser lock", det.lock_noise_bw_hz},
                                 {"link compensation", det.link_noise_bw_hz}}) {
    LoopFeasibility l;
    l.name = name;
    l.snr_db_hz = snr;
    l.threshold_db_hz = slip_threshold_snr(model, bw, kMaxSlipRate);
    l.margin_db = snr - l.threshold_db_hz;
    l.slip_rate = slip_rate_estimate(model, snr, bw, bw);
    fail = fail || l.slip_rate > kMaxSlipRate;
    worst = std::min(worst, l.margin_db);
    r.loops.push_back(l);
  }
  r.verdict = fail ? Verdict::Fail : worst < det.marginal_db ? Verdict::MarginalPass : Verdict::Pass;
  return r;
}

}  // namespace fiberlink
