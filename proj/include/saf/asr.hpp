#pragma once

#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "saf/types.hpp"

namespace saf {

struct AsrConfig {
  double cutoff_k = 20.0;
  double calib_window_s = 1.0;
  double calib_z_lo = -3.5;
  double calib_z_hi = 5.5;
  std::size_t min_calib_windows = 30;
  double proc_window_s = 0.5;
  double proc_overlap = 0.5;

  void validate() const;
};

struct AsrModel {
  Eigen::MatrixXd mixing;     // C x C, symmetric square root of the calibration covariance
  Eigen::MatrixXd threshold;  // C x C, diag(mu + k * sigma) * V^T
  std::size_t channels = 0;
};

// Keeps the calibration windows whose per-channel RMS robust z-scores all lie
// in [calib_z_lo, calib_z_hi]; falls back to the full recording when fewer than
// min_calib_windows survive.
Recording select_calibration(const Recording& rec, const AsrConfig& cfg);

AsrModel asr_fit(const Recording& calib, const AsrConfig& cfg);

// Sliding-window subspace reconstruction blended with raised-cosine weights.
Recording asr_apply(const Recording& rec, const AsrModel& model, const AsrConfig& cfg);

// Per-window decision record; exposed for diagnostics and tests.
struct AsrWindowReport {
  std::size_t start = 0;
  std::size_t length = 0;
  std::vector<bool> rejected;  // per component, ascending eigenvalue order
};
std::vector<AsrWindowReport> asr_inspect(const Recording& rec, const AsrModel& model,
                                         const AsrConfig& cfg);

// "ASR1" | u32 C | mixing (row-major f64) | threshold (row-major f64), little-endian.
void write_asr_model(const AsrModel& model, const std::filesystem::path& path);
AsrModel read_asr_model(const std::filesystem::path& path);

}  // namespace saf
