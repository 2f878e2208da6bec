#include "saf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "saf/error.hpp"

namespace saf::metrics {

ConfusionMatrix confusion(std::span<const int> y_true, std::span<const int> y_pred) {
  if (y_true.size() != y_pred.size()) throw ValidationError("confusion: length mismatch");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i], p = y_pred[i];
    if (t < 0 || t > 1 || p < 0 || p > 1) throw ValidationError("confusion: labels must be 0 or 1");
    ++cm.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  return cm;
}

MacroMetrics macro_metrics(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw ValidationError("macro_metrics: empty confusion matrix");
  const auto ratio = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
  MacroMetrics m;
  for (std::size_t c = 0; c < 2; ++c) {
    const double tp = static_cast<double>(cm.counts[c][c]);
    const double fn = static_cast<double>(cm.counts[c][1 - c]);
    const double fp = static_cast<double>(cm.counts[1 - c][c]);
    const double recall = ratio(tp, tp + fn);
    const double precision = ratio(tp, tp + fp);
    const double f1 = ratio(2.0 * precision * recall, precision + recall);
    m.recall += recall / 2.0;
    m.precision += precision / 2.0;
    m.f1 += f1 / 2.0;
  }
  m.accuracy = m.recall;
  return m;
}

double coefficient_of_variation(std::span<const double> values) {
  if (values.empty()) throw ValidationError("coefficient_of_variation: no values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (mean == 0.0) throw ValidationError("coefficient_of_variation: mean is zero");
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  return std::sqrt(var) / mean;
}

double f_statistic(const FeatureMatrix& features, std::span<const int> groups) {
  if (features.size() != groups.size()) throw ValidationError("f_statistic: features/groups length mismatch");
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < groups.size(); ++i) members[groups[i]].push_back(i);
  if (members.size() < 2) throw ValidationError("f_statistic: needs at least 2 groups");
  for (const auto& [g, idx] : members) {
    if (idx.size() < 2) throw ValidationError("f_statistic: group " + std::to_string(g) + " has fewer than 2 samples");
  }
  const std::size_t n = features.size();
  const std::size_t dims = features.front().size();
  if (dims == 0) throw ValidationError("f_statistic: empty feature vectors");
  for (const auto& f : features) {
    if (f.size() != dims) throw ValidationError("f_statistic: ragged feature matrix");
  }
  const double k = static_cast<double>(members.size());
  double total = 0.0;
  for (std::size_t d = 0; d < dims; ++d) {
    double grand = 0.0;
    for (const auto& f : features) grand += f[d];
    grand /= static_cast<double>(n);
    double ssb = 0.0, ssw = 0.0;
    for (const auto& [g, idx] : members) {
      double mean = 0.0;
      for (std::size_t i : idx) mean += features[i][d];
      mean /= static_cast<double>(idx.size());
      ssb += static_cast<double>(idx.size()) * (mean - grand) * (mean - grand);
      for (std::size_t i : idx) ssw += (features[i][d] - mean) * (features[i][d] - mean);
    }
    const double msb = ssb / (k - 1.0);
    const double msw = ssw / (static_cast<double>(n) - k);
    if (msw > 0.0) {
      total += msb / msw;
    } else {
      total += msb > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
  }
  return total / static_cast<double>(dims);
}

double silhouette(const FeatureMatrix& features, std::span<const int> labels) {
  if (features.size() != labels.size()) throw ValidationError("silhouette: features/labels length mismatch");
  if (features.size() < 2) throw ValidationError("silhouette: needs at least 2 points");
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  if (sizes.size() < 2) throw ValidationError("silhouette: needs at least 2 clusters");
  const std::size_t n = features.size();
  const auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0.0;
    for (std::size_t d = 0; d < features[i].size(); ++d) {
      const double diff = features[i][d] - features[j][d];
      s += diff * diff;
    }
    return std::sqrt(s);
  };
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes[labels[i]] == 1) continue;
    std::map<int, double> sums;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) sums[labels[j]] += dist(i, j);
    }
    const double a = sums[labels[i]] / static_cast<double>(sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [l, s] : sums) {
      if (l != labels[i]) b = std::min(b, s / static_cast<double>(sizes[l]));
    }
    const double den = std::max(a, b);
    total += den > 0.0 ? (b - a) / den : 0.0;
  }
  return total / static_cast<double>(n);
}

Quartiles quartiles(std::span<const double> values) {
  if (values.empty()) throw ValidationError("quartiles: no values");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const auto at = [&](double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  return {at(0.25), at(0.75)};
}

std::vector<double> iqr_filter(std::span<const double> values) {
  if (values.size() < 4) throw ValidationError("iqr_filter: needs at least 4 values");
  const auto q = quartiles(values);
  const double iqr = q.q3 - q.q1;
  if (iqr == 0.0) return {values.begin(), values.end()};
  const double lo = q.q1 - 1.5 * iqr, hi = q.q3 + 1.5 * iqr;
  std::vector<double> out;
  for (double v : values) {
    if (v > lo && v < hi) out.push_back(v);
  }
  return out;
}

}  // namespace saf::metrics
