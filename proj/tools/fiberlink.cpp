#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fiberlink/config.hpp"
#include "fiberlink/control.hpp"
#include "fiberlink/io.hpp"

namespace fl = fiberlink;

namespace {

struct Source {
  std::string config;
  std::string preset;
  std::optional<std::uint64_t> seed;
};

void add_source(CLI::App* cmd, Source& s) {
  cmd->add_option("--config", s.config, "scenario YAML file");
  cmd->add_option("--preset", s.preset, "shipped preset: paper_540km, toy_1span, cascade_2x150");
  cmd->add_option("--seed", s.seed, "override run.seed");
}

fl::ScenarioConfig load(const Source& s) {
  if (!s.config.empty() && !s.preset.empty()) {
    throw fl::ConfigError("give either --config or --preset, not both");
  }
  if (s.config.empty() && s.preset.empty()) throw fl::ConfigError("need --config or --preset");
  auto c = s.config.empty() ? fl::load_preset(s.preset) : fl::load_config(s.config);
  if (s.seed) c.run.seed = *s.seed;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"phase-stabilized fiber link simulator and planner"};
  app.require_subcommand(1);

  Source sim_src;
  std::string sim_out = "out";
  auto* sim = app.add_subcommand("simulate", "run a scenario and write the output bundle");
  add_source(sim, sim_src);
  sim->add_option("--out", sim_out, "output directory");

  Source an_src;
  std::string an_input, an_out = "out";
  auto* an = app.add_subcommand("analyze", "ADEV and PSD of a run.csv or external phase record");
  an->add_option("--input", an_input, "CSV with t_s and a phase column")->required();
  add_source(an, an_src);
  an->add_option("--out", an_out, "output directory");

  Source plan_src;
  auto* plan = app.add_subcommand("plan", "budget, oscillation, spurs and feasibility report");
  add_source(plan, plan_src);

  std::uint64_t cal_samples = 20'000'000, cal_seed = 1;
  double anchor_snr = 85.0, anchor_bw = 14e6, anchor_rate = 1e-4;
  auto* cal = app.add_subcommand("calibrate", "fit the slip model to the Monte Carlo oracle");
  cal->add_option("--samples", cal_samples, "samples per SNR point");
  cal->add_option("--seed", cal_seed, "oracle seed");
  cal->add_option("--anchor-snr", anchor_snr, "anchor SNR density, dB/Hz");
  cal->add_option("--anchor-bw", anchor_bw, "anchor noise bandwidth, Hz");
  cal->add_option("--anchor-rate", anchor_rate, "anchor slip rate, 1/s");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*sim) {
      const auto cfg = load(sim_src);
      const auto bundle = fl::build_bundle(cfg);
      fl::write_bundle(bundle, sim_out);
      std::cout << bundle.files.at("report.txt");
      if (bundle.unstable) std::cout << "instability flagged (correction diverged)\n";
      return 0;
    }
    if (*an) {
      fl::AnalysisConfig a;
      if (!an_src.config.empty() || !an_src.preset.empty()) a = load(an_src).analysis;
      const auto text = fl::read_file(an_input);
      const auto products = fl::analyze_run_csv(text, a);
      std::filesystem::create_directories(an_out);
      fl::write_file(std::filesystem::path(an_out) / "adev.csv", fl::adev_csv(products));
      fl::write_file(std::filesystem::path(an_out) / "psd.csv", fl::psd_csv(products));
      for (const auto& q : products.adev_filtered) {
        std::cout << "adev(" << fl::fmt(q.tau) << " s) " << fl::fmt(q.sigma_y) << "\n";
      }
      for (const auto& n : products.notices) std::cout << "notice: " << n << "\n";
      return 0;
    }
    if (*plan) {
      const auto cfg = load(plan_src);
      int rc = 0;
      std::cout << fl::plan_report(cfg, rc);
      return rc;
    }
    if (*cal) {
      const auto c = fl::calibrate_slip_model(anchor_snr, anchor_bw, anchor_rate, cal_samples, cal_seed);
      for (const auto& p : c.points) {
        std::cerr << "rho " << p.rho << " slips " << p.slips << " rate " << p.rate() << "\n";
      }
      std::cerr << "monte carlo front factor " << fl::fmt(c.mc_front_factor) << "\n";
      std::cout << "slip_model:\n  front_factor: " << fl::fmt(c.model.front_factor)
                << "\n  exponent: " << fl::fmt(c.model.exponent) << "\n";
      return 0;
    }
  } catch (const fl::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
