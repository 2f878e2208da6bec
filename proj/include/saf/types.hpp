#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace saf {

// Continuous multichannel signal, channel-major: data[c * samples + n].
struct Recording {
  std::size_t channels = 0;
  std::size_t samples = 0;
  double sample_rate_hz = 0.0;
  std::vector<double> data;
  std::vector<std::string> channel_names;

  std::span<double> channel(std::size_t c) { return {data.data() + c * samples, samples}; }
  std::span<const double> channel(std::size_t c) const {
    return {data.data() + c * samples, samples};
  }
  double duration_s() const { return static_cast<double>(samples) / sample_rate_hz; }

  // Throws ValidationError when an invariant is broken.
  void validate() const;

  static Recording zeros(std::size_t channels, std::size_t samples, double sample_rate_hz);
};

enum class Split : std::uint8_t { kTrain, kVal, kTest, kNone };

std::string_view to_string(Split split);
// Throws FormatError on an unknown token.
Split parse_split(std::string_view token);

// One fixed-length segment x in R^{C x M}, channel-major, stored in single precision
// so that it round-trips bit-exactly through the on-disk format.
struct Epoch {
  std::size_t channels = 0;
  std::size_t samples = 0;
  double sample_rate_hz = 0.0;
  std::vector<float> x;
  int y = 0;
  std::string subject;
  int subject_index = 0;
  Split split = Split::kNone;

  std::span<float> channel(std::size_t c) { return {x.data() + c * samples, samples}; }
  std::span<const float> channel(std::size_t c) const {
    return {x.data() + c * samples, samples};
  }

  void validate() const;
};

// A collection of epochs sharing (C, M, fs). subjects[i] is the id whose
// subject_index is i; ids are kept sorted.
struct EpochSet {
  std::vector<Epoch> epochs;
  std::vector<std::string> subjects;
  std::vector<std::size_t> per_subject_counts;

  std::size_t size() const { return epochs.size(); }
  bool empty() const { return epochs.empty(); }
  std::size_t num_subjects() const { return subjects.size(); }
  std::size_t channels() const { return epochs.empty() ? 0 : epochs.front().channels; }
  std::size_t samples() const { return epochs.empty() ? 0 : epochs.front().samples; }
  double sample_rate_hz() const { return epochs.empty() ? 0.0 : epochs.front().sample_rate_hz; }

  // Re-derives subjects, subject_index and per_subject_counts from the epochs'
  // subject ids (sorted assignment) and checks shape consistency.
  void reindex();

  // Epochs with the given split tag, reindexed over their own subjects.
  EpochSet filter(Split split) const;
};

struct ManifestRow {
  std::string path;
  std::string subject;
  int y = 0;
  Split split = Split::kNone;
};

struct Manifest {
  static constexpr std::uint32_t kFormatVersion = 1;
  std::uint32_t format_version = kFormatVersion;
  std::vector<ManifestRow> rows;
};

}  // namespace saf
