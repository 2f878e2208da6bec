#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "saf/asr.hpp"
#include "saf/dataset.hpp"
#include "saf/dsp.hpp"
#include "saf/types.hpp"

namespace saf::synth {

inline constexpr std::size_t kBands = 5;  // Delta, Theta, Alpha, Beta, Gamma
using BandAmplitudes = std::array<double, kBands>;

struct SynthConfig {
  std::size_t subjects = 4;
  std::size_t channels = 4;
  double fs = 512.0;
  double duration_s = 120.0;  // per (subject, class)
  std::array<BandAmplitudes, 2> class_signature{{{1.0, 1.0, 1.0, 1.0, 1.0}, {2.0, 1.0, 1.0, 1.0, 1.0}}};
  double subject_bias = 1.0;  // beta
  double tilt_scale = 0.3;    // log-amplitude std of the band tilt at beta = 1
  double line_noise_amp = 0.5;
  double line_freq_hz = 60.0;
  double artifact_rate_per_min = 2.0;
  double artifact_gain = 20.0;
  std::uint64_t seed = 0;

  void validate() const;
};

std::string subject_id(std::size_t j);

// Fully determined by (cfg, j, y).
Recording generate_subject_recording(const SynthConfig& cfg, std::size_t subject, int y);

struct DatasetOptions {
  PipelineConfig pipeline{};
  AsrConfig asr{};
  bool apply_asr = true;
  SplitRatios ratios{};
  // When set, this subject becomes the test split (leave-one-subject-out);
  // otherwise every subject is split 8:1:1.
  std::string holdout_subject;
};

// Preprocesses every (subject, class) recording, fitting ASR per subject on its
// class-0 recording, and tags splits. Nothing is written.
EpochSet generate_epochs(const SynthConfig& cfg, const DatasetOptions& options);

// generate_epochs, then NDF files under out_dir/epochs and out_dir/manifest.csv.
Manifest generate_dataset(const SynthConfig& cfg, const DatasetOptions& options,
                          const std::filesystem::path& out_dir);

}  // namespace saf::synth
