#pragma once

// Shipped scenario presets.

#include <string>
#include <string_view>
#include <vector>

#include "fiberlink/core.hpp"

namespace fiberlink {

inline constexpr std::string_view kPresetPaper540km = R"yaml(name: paper_540km
noise:
  fiber:
    h: {-2: 15.0}
topology:
  group_delay_s_per_km: 5.0e-6
  devices:
    - {type: aom, shift_hz: 39e6}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 1}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: oadm, insertion_loss_db: 1.0}
    - {type: span, length_km: 11, loss_db_per_km: 0.2, K: 1, noise: fiber}
    - {type: oadm, insertion_loss_db: 1.0}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: edfa, gain_db: 16.666666666666668}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: span, length_km: 36, loss_db_per_km: 0.2, K: 1, noise: fiber}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: oadm, insertion_loss_db: 1.0}
    - {type: span, length_km: 103, loss_db_per_km: 0.2, K: 1, noise: fiber}
    - {type: oadm, insertion_loss_db: 1.0}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: edfa, gain_db: 16.666666666666668}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: oadm, insertion_loss_db: 1.0}
    - {type: span, length_km: 85, loss_db_per_km: 0.2, K: 1, noise: fiber}
    - {type: oadm, insertion_loss_db: 1.0}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: edfa, gain_db: 16.666666666666668}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: oadm, insertion_loss_db: 1.0}
    - {type: span, length_km: 35, loss_db_per_km: 0.2, K: 1, noise: fiber}
    - {type: oadm, insertion_loss_db: 1.0}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 1}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: oadm, insertion_loss_db: 1.0}
    - {type: span, length_km: 35, loss_db_per_km: 0.2, K: 1, noise: fiber}
    - {type: oadm, insertion_loss_db: 1.0}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: edfa, gain_db: 16.666666666666668}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: oadm, insertion_loss_db: 1.0}
    - {type: span, length_km: 85, loss_db_per_km: 0.2, K: 1, noise: fiber}
    - {type: oadm, insertion_loss_db: 1.0}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: edfa, gain_db: 16.666666666666668}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: oadm, insertion_loss_db: 1.0}
    - {type: span, length_km: 103, loss_db_per_km: 0.2, K: 1, noise: fiber}
    - {type: oadm, insertion_loss_db: 1.0}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: span, length_km: 36, loss_db_per_km: 0.2, K: 1, noise: fiber}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: edfa, gain_db: 16.666666666666668}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
    - {type: oadm, insertion_loss_db: 1.0}
    - {type: span, length_km: 11, loss_db_per_km: 0.2, K: 1, noise: fiber}
    - {type: oadm, insertion_loss_db: 1.0}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 4}
servo:
  divider_n: 152
  tune: {zero_ratio: 0.05, gain_margin_db: 12}
  fast_bw_hz: 100e3
  slow_bw_hz: 0.5
  tracking_bw_hz: 100e3
plan:
  aom1_hz: 39e6
  rls_lock_offset_hz: 74e6
  short_link_aom_hz: 37e6
filters:
  lock:
    - {center_hz: 75e6, bandwidth_hz: 14e6}
  roundtrip:
    - {center_hz: 152e6, bandwidth_hz: 4e6}
  end_to_end:
    - {center_hz: 76e6, bandwidth_hz: 1e6}
detection:
  roundtrip_snr_db_hz: 86.5
  lock_snr_db_hz: 86.5
analysis:
  taus_s: [1, 10, 100, 1000]
  prefilter_hz: 10
  psd_segment: 8192
  psd_overlap: 0.5
slip_model:
  front_factor: 35394311.70219393
  exponent: 1.8750836654165348
run:
  duration_s: 1000
  fs_hz: 10000
  seed: 1
  output_rate_hz: 1
  compensation: true
  settle_s: 0.5
planner:
  launch_power_dbm: 0
  excess_noise_db: 7.4
  effective_reflectance_db: -18
)yaml";

inline constexpr std::string_view kPresetToy1Span = R"yaml(name: toy_1span
noise:
  fiber:
    h: {-2: 15.0}
topology:
  devices:
    - {type: aom, shift_hz: 39e6}
    - {type: span, length_km: 100, loss_db_per_km: 0.2, K: 4, noise: fiber}
servo:
  divider_n: 152
  tune: {zero_ratio: 0.05, gain_margin_db: 12}
  fast_bw_hz: 100e3
  slow_bw_hz: 0.5
  tracking_bw_hz: 100e3
plan:
  aom1_hz: 39e6
  rls_lock_offset_hz: 74e6
  short_link_aom_hz: 37e6
filters:
  lock:
    - {center_hz: 75e6, bandwidth_hz: 14e6}
  roundtrip:
    - {center_hz: 152e6, bandwidth_hz: 4e6}
  end_to_end:
    - {center_hz: 76e6, bandwidth_hz: 1e6}
detection:
  roundtrip_snr_db_hz: 86.5
  lock_snr_db_hz: 86.5
analysis:
  taus_s: [1, 10, 100, 1000]
  prefilter_hz: 10
  psd_segment: 8192
  psd_overlap: 0.5
slip_model:
  front_factor: 35394311.70219393
  exponent: 1.8750836654165348
run:
  duration_s: 100
  fs_hz: 10000
  seed: 1
  output_rate_hz: 10
planner:
  launch_power_dbm: 0
  excess_noise_db: 7.4
)yaml";

inline constexpr std::string_view kPresetCascade2x150 = R"yaml(name: cascade_2x150
noise:
  fiber:
    h: {-2: 15.0}
topology:
  devices:
    - {type: aom, shift_hz: 39e6}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 2}
    - {type: span, length_km: 75, loss_db_per_km: 0.2, K: 2, noise: fiber}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 2}
    - {type: edfa, gain_db: 15}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 2}
    - {type: span, length_km: 75, loss_db_per_km: 0.2, K: 2, noise: fiber}
    - {type: connector, loss_db: 0.5, reflectance_db: -35, count: 2}
servo:
  divider_n: 152
  tune: {zero_ratio: 0.05, gain_margin_db: 12}
  fast_bw_hz: 100e3
  slow_bw_hz: 0.5
  tracking_bw_hz: 100e3
plan:
  aom1_hz: 39e6
  rls_lock_offset_hz: 74e6
  short_link_aom_hz: 37e6
filters:
  lock:
    - {center_hz: 75e6, bandwidth_hz: 14e6}
  roundtrip:
    - {center_hz: 152e6, bandwidth_hz: 4e6}
  end_to_end:
    - {center_hz: 76e6, bandwidth_hz: 1e6}
detection:
  roundtrip_snr_db_hz: 86.5
  lock_snr_db_hz: 86.5
analysis:
  taus_s: [1, 10, 100, 1000]
  prefilter_hz: 10
  psd_segment: 8192
  psd_overlap: 0.5
slip_model:
  front_factor: 35394311.70219393
  exponent: 1.8750836654165348
run:
  duration_s: 1000
  fs_hz: 20000
  seed: 1
  output_rate_hz: 1
  cascade_stages: 2
planner:
  launch_power_dbm: 0
  excess_noise_db: 7.4
  effective_reflectance_db: -18
)yaml";

inline std::vector<std::string> preset_names() {
  return {"paper_540km", "toy_1span", "cascade_2x150"};
}

inline std::string preset_text(const std::string& name) {
  if (name == "paper_540km") return std::string(kPresetPaper540km);
  if (name == "toy_1span") return std::string(kPresetToy1Span);
  if (name == "cascade_2x150") return std::string(kPresetCascade2x150);
  throw ConfigError("unknown preset '" + name + "' (have paper_540km, toy_1span, cascade_2x150)");
}

}  // namespace fiberlink
