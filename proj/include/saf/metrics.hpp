#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "saf/types.hpp"

namespace saf::metrics {

// counts[true][predicted]
struct ConfusionMatrix {
  std::array<std::array<std::size_t, 2>, 2> counts{};

  std::size_t total() const { return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1]; }
};

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred);

struct MacroMetrics {
  double accuracy = 0.0;  // mean per-class recall
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

MacroMetrics macro_metrics(const ConfusionMatrix& cm);

struct Psd {
  std::vector<double> freqs;
  std::vector<double> density;
  double df = 0.0;
};

// Welch estimate: periodic Hann segments, mean removed per segment, averaged
// periodograms, one-sided density.
Psd welch_psd(std::span<const double> x, double fs, double window_s = 2.0, double overlap = 0.5);

struct Band {
  std::string name;
  double lo_hz = 0.0;
  double hi_hz = 0.0;
};

// Delta [1,4) Theta [4,8) Alpha [8,13) Beta [13,30) Gamma [30,100)
std::vector<Band> default_bands();
// default_bands() with upper edges clipped to Nyquist; bands starting at or
// above Nyquist are dropped.
std::vector<Band> bands_for_rate(double fs);

// Trapezoidal integral of the PSD over each band, with the density linearly
// interpolated at the band edges.
std::vector<double> band_power(const Psd& psd, std::span<const Band> bands);

// Population standard deviation over mean.
double coefficient_of_variation(std::span<const double> values);

using FeatureMatrix = std::vector<std::vector<double>>;

// One-way ANOVA F per feature dimension, averaged over dimensions.
double f_statistic(const FeatureMatrix& features, std::span<const int> groups);

// Mean Euclidean silhouette; points in singleton clusters score 0.
double silhouette(const FeatureMatrix& features, std::span<const int> labels);

struct Quartiles {
  double q1 = 0.0;
  double q3 = 0.0;
};
// Linear interpolation between order statistics (position q * (n - 1)).
Quartiles quartiles(std::span<const double> values);

// Keeps values strictly inside (Q1 - 1.5 IQR, Q3 + 1.5 IQR), in input order.
// When IQR is 0 every value is kept.
std::vector<double> iqr_filter(std::span<const double> values);

// Per epoch: log band power for every (channel, band), channel-major, then each
// dimension standardized across the set. The Welch window is shortened to the
// epoch length when the epoch is shorter than window_s.
FeatureMatrix band_power_features(std::span<const Epoch> epochs, std::span<const Band> bands,
                                  double window_s = 2.0);

}  // namespace saf::metrics
