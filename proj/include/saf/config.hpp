#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "saf/asr.hpp"
#include "saf/dsp.hpp"
#include "saf/isbcs.hpp"
#include "saf/synth.hpp"
#include "saf/train.hpp"

namespace saf {

// INI-style run configuration:
//
//   # comment
//   [train]
//   lr = 0.001
//
// Sections: pipeline, asr, swap, train, synth. Unknown sections or keys and
// repeated keys are errors. Omitted keys keep their defaults.
struct CliConfig {
  PipelineConfig pipeline{};
  AsrConfig asr{};
  bool asr_enabled = true;
  SwapConfig swap{};
  train::TrainConfig train{};
  train::GridConfig grid{};
  synth::SynthConfig synth{};
  std::string holdout_subject;

  void validate() const;
};

// Throws ConfigError on syntax or value errors.
CliConfig parse_config(std::string_view text);
// Throws IoError when the file cannot be read.
CliConfig load_config(const std::filesystem::path& path);

}  // namespace saf
