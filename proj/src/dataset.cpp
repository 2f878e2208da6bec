#include "saf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "saf/error.hpp"
#include "saf/random.hpp"

namespace saf {

void Recording::validate() const {
  if (channels < 1) throw ValidationError("recording has no channels");
  if (samples < 1) throw ValidationError("recording has no samples");
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) {
    throw ValidationError("recording sample rate must be positive");
  }
  if (data.size() != channels * samples) throw ValidationError("recording data size mismatch");
  if (!channel_names.empty() && channel_names.size() != channels) {
    throw ValidationError("channel_names length differs from channel count");
  }
  for (double v : data) {
    if (!std::isfinite(v)) throw ValidationError("recording contains non-finite values");
  }
}

Recording Recording::zeros(std::size_t channels, std::size_t samples, double sample_rate_hz) {
  Recording r;
  r.channels = channels;
  r.samples = samples;
  r.sample_rate_hz = sample_rate_hz;
  r.data.assign(channels * samples, 0.0);
  r.channel_names.reserve(channels);
  for (std::size_t c = 0; c < channels; ++c) r.channel_names.push_back("ch" + std::to_string(c));
  return r;
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    case Split::kNone: return "none";
  }
  return "none";
}

Split parse_split(std::string_view token) {
  if (token == "train") return Split::kTrain;
  if (token == "val") return Split::kVal;
  if (token == "test") return Split::kTest;
  if (token == "none") return Split::kNone;
  throw FormatError("unknown split token '" + std::string(token) + "'");
}

void Epoch::validate() const {
  if (channels < 1 || samples < 1) throw ValidationError("epoch must have C >= 1 and M >= 1");
  if (x.size() != channels * samples) throw ValidationError("epoch data size mismatch");
  if (y != 0 && y != 1) throw ValidationError("epoch class label must be 0 or 1");
  if (!(sample_rate_hz > 0.0)) throw ValidationError("epoch sample rate must be positive");
  for (float v : x) {
    if (!std::isfinite(v)) throw ValidationError("epoch contains non-finite values");
  }
}

void EpochSet::reindex() {
  subjects.clear();
  for (const auto& e : epochs) subjects.push_back(e.subject);
  std::sort(subjects.begin(), subjects.end());
  subjects.erase(std::unique(subjects.begin(), subjects.end()), subjects.end());
  per_subject_counts.assign(subjects.size(), 0);
  for (auto& e : epochs) {
    const auto it = std::lower_bound(subjects.begin(), subjects.end(), e.subject);
    e.subject_index = static_cast<int>(it - subjects.begin());
    ++per_subject_counts[static_cast<std::size_t>(e.subject_index)];
  }
  if (epochs.empty()) return;
  const auto& first = epochs.front();
  for (const auto& e : epochs) {
    if (e.channels != first.channels || e.samples != first.samples ||
        e.sample_rate_hz != first.sample_rate_hz) {
      throw ValidationError("epochs disagree on (C, M, sample rate)");
    }
  }
}

EpochSet EpochSet::filter(Split split) const {
  EpochSet out;
  for (const auto& e : epochs) {
    if (e.split == split) out.epochs.push_back(e);
  }
  out.reindex();
  return out;
}

EpochSet split_dataset(const EpochSet& set, SplitRatios ratios, std::uint64_t seed) {
  if (!(ratios.train > 0.0 && ratios.val > 0.0 && ratios.test > 0.0)) {
    throw ConfigError("split ratios must be positive");
  }
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  EpochSet out = set;
  // Strata keyed by (subject, class) in sorted order so the per-stratum stream
  // does not depend on epoch order within the set.
  std::map<std::pair<std::string, int>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < out.epochs.size(); ++i) {
    strata[{out.epochs[i].subject, out.epochs[i].y}].push_back(i);
  }
  std::uint64_t ordinal = 0;
  for (auto& [key, members] : strata) {
    Rng rng(derive_seed(seed, ordinal++, static_cast<std::uint64_t>(key.second)));
    rng.shuffle(std::span<std::size_t>(members));
    const auto n = static_cast<double>(members.size());
    // The epsilon absorbs representation error in products like 10 * 0.1.
    const auto n_val = static_cast<std::size_t>(std::floor(n * ratios.val + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(n * ratios.test + 1e-9));
    const std::size_t n_train = members.size() - n_val - n_test;
    for (std::size_t k = 0; k < members.size(); ++k) {
      Split s = Split::kTrain;
      if (k >= n_train) s = (k < n_train + n_val) ? Split::kVal : Split::kTest;
      out.epochs[members[k]].split = s;
    }
  }
  return out;
}

EpochSet loso_split(const EpochSet& set, const std::string& held_out_subject, std::uint64_t seed,
                    SplitRatios ratios) {
  EpochSet sources;
  EpochSet target;
  for (const auto& e : set.epochs) {
    (e.subject == held_out_subject ? target : sources).epochs.push_back(e);
  }
  if (target.empty()) throw ValidationError("held-out subject not present: " + held_out_subject);
  sources.reindex();
  sources = split_dataset(sources, ratios, seed);
  EpochSet out;
  for (auto& e : sources.epochs) {
    if (e.split == Split::kTest) e.split = Split::kTrain;
    out.epochs.push_back(std::move(e));
  }
  for (auto& e : target.epochs) {
    e.split = Split::kTest;
    out.epochs.push_back(std::move(e));
  }
  out.reindex();
  return out;
}

}  // namespace saf
