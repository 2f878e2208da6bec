#pragma once

#include <cstdint>

#include "saf/types.hpp"

namespace saf {

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

// Stratified by (subject, class): each stratum is shuffled with a generator
// seeded from (seed, stratum) and cut by cumulative ratio with floor rounding.
// Leftover epochs go to train.
EpochSet split_dataset(const EpochSet& set, SplitRatios ratios, std::uint64_t seed);

// Leave-one-subject-out: the held-out subject becomes test; the remaining
// subjects are split train/val by split_dataset, with their test share folded
// back into train.
EpochSet loso_split(const EpochSet& set, const std::string& held_out_subject, std::uint64_t seed,
                    SplitRatios ratios = {});

}  // namespace saf
