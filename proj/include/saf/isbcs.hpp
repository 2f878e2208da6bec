#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "saf/random.hpp"
#include "saf/types.hpp"

namespace saf {

struct SwapConfig {
  double p = 0.5;
  std::uint64_t seed = 0;
  bool keep_originals = false;

  void validate() const;
};

// Audit record for one same-class pair. A singleton leftover is recorded with
// a == b and an all-false mask.
struct SwapRecord {
  std::size_t a = 0;
  std::size_t b = 0;
  std::vector<bool> swapped_channels;
};

// Groups indices by label, shuffles each group and pairs consecutive members.
// Groups are visited in ascending label order; an odd member is left unpaired.
std::vector<std::pair<std::size_t, std::size_t>> pair_by_class(std::span<const int> labels,
                                                               Rng& rng);

struct SwapResult {
  std::vector<Epoch> epochs;
  std::vector<SwapRecord> records;
};

// Inter-subject balanced channel swap over one batch. Each pair draws a
// Bernoulli(p) mask per channel and exchanges the masked channels in both
// directions. Labels and subject tags stay with the base epoch.
SwapResult isbcs_augment_batch(std::span<const Epoch> batch, const SwapConfig& cfg, Rng& rng);

// In-place variant over float buffers laid out [B, C, M] (the training path).
// Returns the swap records.
std::vector<SwapRecord> isbcs_swap_inplace(std::span<float> data, std::size_t channels,
                                           std::size_t samples, std::span<const int> labels,
                                           double p, Rng& rng);

void write_swap_log(std::span<const SwapRecord> records, const std::filesystem::path& path);

}  // namespace saf
