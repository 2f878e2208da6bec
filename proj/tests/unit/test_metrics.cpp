#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "saf/error.hpp"
#include "saf/metrics.hpp"
#include "test_util.hpp"

using namespace saf;
using namespace saf::metrics;

namespace {

// O(n^2) silhouette written out from the definition.
double brute_silhouette(const FeatureMatrix& f, const std::vector<int>& l) {
  const std::size_t n = f.size();
  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0;
    for (std::size_t k = 0; k < f[i].size(); ++k) s += (f[i][k] - f[j][k]) * (f[i][k] - f[j][k]);
    return std::sqrt(s);
  };
  std::vector<int> ids(l.begin(), l.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t own = 0;
    double a = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && l[j] == l[i]) a += dist(i, j), ++own;
    if (own == 0) continue;
    a /= static_cast<double>(own);
    double b = 1e300;
    for (int c : ids) {
      if (c == l[i]) continue;
      double s = 0;
      std::size_t m = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (l[j] == c) s += dist(i, j), ++m;
      b = std::min(b, s / static_cast<double>(m));
    }
    total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

std::vector<double> sine(double f, double fs, std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2 * std::numbers::pi * f * i / fs);
  return x;
}

double psd_power(const Psd& p) {
  double s = 0;
  for (double d : p.density) s += d * p.df;
  return s;
}

}  // namespace

TEST_CASE("confusion matrix") {
  const std::vector<int> t{0, 0, 1, 1};
  auto cm = confusion(t, t);
  CHECK(cm.counts[0][0] == 2);
  CHECK(cm.counts[1][1] == 2);
  CHECK(cm.counts[0][1] == 0);
  const std::vector<int> t2{0, 1}, p2{0, 0};
  cm = confusion(t2, p2);
  CHECK(cm.counts[0][0] == 1);
  CHECK(cm.counts[1][0] == 1);
  CHECK(confusion(std::vector<int>{}, std::vector<int>{}).total() == 0);
  CHECK_THROWS_AS(confusion(t, t2), ValidationError);
  CHECK_THROWS_AS(confusion(std::vector<int>{2}, std::vector<int>{0}), ValidationError);
}

TEST_CASE("macro metrics") {
  ConfusionMatrix perfect;
  perfect.counts = {{{5, 0}, {0, 5}}};
  const auto m1 = macro_metrics(perfect);
  CHECK(m1.accuracy == 1.0);
  CHECK(m1.precision == 1.0);
  CHECK(m1.recall == 1.0);
  CHECK(m1.f1 == 1.0);

  ConfusionMatrix all0;
  all0.counts = {{{4, 0}, {4, 0}}};
  const auto m2 = macro_metrics(all0);
  CHECK(m2.accuracy == doctest::Approx(0.5));
  CHECK(m2.f1 == doctest::Approx((2.0 / 3.0 + 0.0) / 2.0));

  ConfusionMatrix mixed;
  mixed.counts = {{{3, 1}, {2, 4}}};
  const auto m3 = macro_metrics(mixed);
  CHECK(m3.recall == doctest::Approx((0.75 + 4.0 / 6.0) / 2.0));
  CHECK(m3.accuracy == m3.recall);
  CHECK(m3.precision == doctest::Approx((3.0 / 5.0 + 4.0 / 5.0) / 2.0));
  CHECK_THROWS_AS(macro_metrics(ConfusionMatrix{}), ValidationError);
}

TEST_CASE("macro metrics against a brute-force oracle with class symmetry") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> t, p;
    const std::size_t n = 5 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i) {
      t.push_back(static_cast<int>(rng.below(2)));
      p.push_back(static_cast<int>(rng.below(2)));
    }
    if (std::count(t.begin(), t.end(), 0) == 0 || std::count(t.begin(), t.end(), 1) == 0) continue;
    double rec[2], prec[2], f1[2];
    for (int c = 0; c < 2; ++c) {
      double tp = 0, fn = 0, fp = 0;
      for (std::size_t i = 0; i < n; ++i) {
        tp += t[i] == c && p[i] == c;
        fn += t[i] == c && p[i] != c;
        fp += t[i] != c && p[i] == c;
      }
      rec[c] = tp / (tp + fn);
      prec[c] = tp + fp > 0 ? tp / (tp + fp) : 0.0;
      f1[c] = prec[c] + rec[c] > 0 ? 2 * prec[c] * rec[c] / (prec[c] + rec[c]) : 0.0;
    }
    const auto m = macro_metrics(confusion(t, p));
    CHECK(m.recall == doctest::Approx((rec[0] + rec[1]) / 2));
    CHECK(m.precision == doctest::Approx((prec[0] + prec[1]) / 2));
    CHECK(m.f1 == doctest::Approx((f1[0] + f1[1]) / 2));
    // Relabel classes: macro averages do not change.
    std::vector<int> tf, pf;
    for (int v : t) tf.push_back(1 - v);
    for (int v : p) pf.push_back(1 - v);
    const auto mf = macro_metrics(confusion(tf, pf));
    CHECK(mf.accuracy == doctest::Approx(m.accuracy));
    CHECK(mf.f1 == doctest::Approx(m.f1));
    // Duplicating class-1 samples keeps per-class recalls and so macro accuracy.
    auto t3 = t, p3 = p;
    for (std::size_t i = 0; i < n; ++i)
      if (t[i] == 1)
        for (int k = 0; k < 2; ++k) t3.push_back(1), p3.push_back(p[i]);
    CHECK(macro_metrics(confusion(t3, p3)).accuracy == doctest::Approx(m.accuracy));
  }
}

TEST_CASE("welch psd") {
  SUBCASE("10 Hz sine: peak bin and Parseval") {
    const auto p = welch_psd(sine(10.0, 512.0, 512 * 40), 512.0);
    const auto peak = std::max_element(p.density.begin(), p.density.end()) - p.density.begin();
    CHECK(p.freqs[static_cast<std::size_t>(peak)] == doctest::Approx(10.0).epsilon(p.df / 10.0));
    CHECK(psd_power(p) == doctest::Approx(0.5).epsilon(0.05));
    CHECK(p.df == doctest::Approx(0.5));
  }
  SUBCASE("white noise Monte Carlo") {
    Rng rng(3);
    double mean = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<double> x(256 * 64);
      for (auto& v : x) v = rng.normal();
      mean += psd_power(welch_psd(x, 256.0));
    }
    mean /= 100.0;
    CHECK(mean >= 0.9);
    CHECK(mean <= 1.1);
  }
  SUBCASE("zero input") {
    const auto p = welch_psd(std::vector<double>(1024, 0.0), 128.0);
    for (double d : p.density) CHECK(d == 0.0);
  }
  SUBCASE("too short") { CHECK_THROWS_AS(welch_psd(std::vector<double>(100, 1.0), 128.0), ValidationError); }
}

TEST_CASE("band power") {
  SUBCASE("10 Hz sine concentrates in alpha") {
    const auto p = welch_psd(sine(10.0, 512.0, 512 * 30), 512.0);
    const auto bands = default_bands();
    const auto bp = band_power(p, bands);
    REQUIRE(bp.size() == 5);
    for (std::size_t i = 0; i < 5; ++i)
      if (i != 2) CHECK(bp[2] > 10.0 * bp[i]);
  }
  SUBCASE("flat unit density gives band widths") {
    Psd p;
    p.df = 0.5;
    for (int i = 0; i <= 256; ++i) {
      p.freqs.push_back(0.5 * i);
      p.density.push_back(1.0);
    }
    const auto bands = default_bands();
    const auto bp = band_power(p, bands);
    for (std::size_t i = 0; i < 5; ++i) CHECK(bp[i] == doctest::Approx(bands[i].hi_hz - bands[i].lo_hz));
    // Edges falling between bins are interpolated.
    const std::vector<Band> odd{{"x", 1.3, 2.7}};
    CHECK(band_power(p, odd)[0] == doctest::Approx(1.4));
    std::fill(p.density.begin(), p.density.end(), 0.0);
    for (double v : band_power(p, bands)) CHECK(v == 0.0);
  }
  SUBCASE("beyond Nyquist") {
    const auto p = welch_psd(std::vector<double>(512, 0.0), 128.0);
    const auto bands = default_bands();
    CHECK_THROWS_AS(band_power(p, bands), ConfigError);
    const auto clipped = bands_for_rate(128.0);
    REQUIRE(clipped.size() == 5);
    CHECK(clipped[4].hi_hz == 64.0);
    CHECK(bands_for_rate(50.0).size() == 4);
    CHECK_NOTHROW(band_power(p, clipped));
  }
}

TEST_CASE("coefficient of variation") {
  CHECK(coefficient_of_variation(std::vector<double>{3, 3, 3}) == 0.0);
  CHECK(coefficient_of_variation(std::vector<double>{1, 3}) == doctest::Approx(0.5));
  CHECK(coefficient_of_variation(std::vector<double>{2, 4, 4, 4, 5, 5, 7, 9}) == doctest::Approx(0.4));
  CHECK_THROWS_AS(coefficient_of_variation(std::vector<double>{-1, 1}), ValidationError);
}

TEST_CASE("f statistic") {
  Rng rng(7);
  auto draw = [&](double offset0, double offset1, std::size_t n) {
    FeatureMatrix f;
    std::vector<int> g;
    for (int grp = 0; grp < 2; ++grp)
      for (std::size_t i = 0; i < n; ++i) {
        f.push_back({rng.normal() + (grp ? offset1 : offset0), rng.normal()});
        g.push_back(grp);
      }
    return std::pair{f, g};
  };
  SUBCASE("identical distributions average near 1") {
    double mean = 0.0;
    // F(1, n-2) has variance about 2, so 400 trials x 2 dims put the mean
    // within 0.05 of 1 at one sigma.
    for (int t = 0; t < 400; ++t) {
      auto [f, g] = draw(0, 0, 100);
      mean += f_statistic(f, g);
    }
    mean /= 400.0;
    CHECK(mean >= 0.8);
    CHECK(mean <= 1.2);
  }
  SUBCASE("10 sigma offset") {
    auto [f, g] = draw(0, 10, 200);
    CHECK(f_statistic(f, g) > 10.0);
  }
  SUBCASE("hand computed value and invariances") {
    const FeatureMatrix f{{1}, {2}, {3}, {5}, {6}, {7}};
    const std::vector<int> g{0, 0, 0, 1, 1, 1};
    // grand mean 4; SSB = 3*(2-4)^2 + 3*(6-4)^2 = 24; SSW = 4; F = (24/1)/(4/4) = 24
    CHECK(f_statistic(f, g) == doctest::Approx(24.0));
    FeatureMatrix moved = f;
    for (auto& r : moved) r[0] = 3.0 * r[0] + 100.0;
    CHECK(f_statistic(moved, g) == doctest::Approx(24.0));
  }
  SUBCASE("copies with equal means give 0") {
    const FeatureMatrix f{{1, 4}, {3, 2}, {1, 4}, {3, 2}};
    CHECK(f_statistic(f, std::vector<int>{0, 0, 1, 1}) == 0.0);
  }
  SUBCASE("errors") {
    const FeatureMatrix f{{1}, {2}, {3}};
    CHECK_THROWS_AS(f_statistic(f, std::vector<int>{0, 0, 1}), ValidationError);
    CHECK_THROWS_AS(f_statistic(f, std::vector<int>{0, 0, 0}), ValidationError);
  }
}

TEST_CASE("silhouette") {
  Rng rng(2);
  SUBCASE("separated blobs") {
    FeatureMatrix f;
    std::vector<int> l;
    for (int c = 0; c < 2; ++c)
      for (int i = 0; i < 30; ++i) {
        f.push_back({c * 100.0 + rng.normal(), rng.normal()});
        l.push_back(c);
      }
    CHECK(silhouette(f, l) > 0.9);
  }
  SUBCASE("random labels on one blob") {
    double mean = 0;
    for (int t = 0; t < 20; ++t) {
      FeatureMatrix f;
      std::vector<int> l;
      for (int i = 0; i < 60; ++i) {
        f.push_back({rng.normal(), rng.normal()});
        l.push_back(static_cast<int>(rng.below(2)));
      }
      mean += silhouette(f, l);
    }
    CHECK(std::abs(mean / 20.0) < 0.05);
  }
  SUBCASE("4-point hand case and brute force") {
    const FeatureMatrix f{{0, 0}, {0, 1}, {3, 0}, {3, 2}};
    const std::vector<int> l{0, 0, 1, 1};
    CHECK(silhouette(f, l) == doctest::Approx(brute_silhouette(f, l)).epsilon(1e-14));
    for (int t = 0; t < 20; ++t) {
      FeatureMatrix g;
      std::vector<int> lab;
      const std::size_t n = 3 + rng.below(48);
      for (std::size_t i = 0; i < n; ++i) {
        g.push_back({rng.normal(), rng.normal(), rng.normal()});
        lab.push_back(static_cast<int>(rng.below(3)));
      }
      lab[0] = 0;
      lab[1] = 1;
      CHECK(silhouette(g, lab) == doctest::Approx(brute_silhouette(g, lab)).epsilon(1e-12));
    }
  }
  SUBCASE("singleton clusters score 0") {
    const FeatureMatrix f{{0}, {1}, {10}};
    const std::vector<int> l{0, 0, 1};
    CHECK(silhouette(f, l) == doctest::Approx(brute_silhouette(f, l)));
    CHECK_THROWS_AS(silhouette(f, std::vector<int>{0, 0, 0}), ValidationError);
  }
}

TEST_CASE("quartiles and the IQR filter") {
  std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 100};
  const auto q = quartiles(v);
  CHECK(q.q1 == doctest::Approx(3.25));
  CHECK(q.q3 == doctest::Approx(7.75));
  CHECK(iqr_filter(v) == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  CHECK(iqr_filter(std::vector<double>(6, 2.5)).size() == 6);
  CHECK_THROWS_AS(iqr_filter(std::vector<double>{1, 2, 3}), ValidationError);
  Rng rng(4);
  double kept = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> u(50);
    for (auto& x : u) x = rng.uniform();
    kept += static_cast<double>(iqr_filter(u).size()) / 50.0;
  }
  CHECK(kept / 100.0 >= 0.95);
}

TEST_CASE("band power features are standardized log powers") {
  Rng rng(5);
  std::vector<Epoch> epochs;
  for (int i = 0; i < 12; ++i) epochs.push_back(testutil::random_epoch(3, 256, 128.0, i % 2, "s", rng));
  const auto bands = bands_for_rate(128.0);
  const auto f = band_power_features(epochs, bands);
  REQUIRE(f.size() == 12);
  REQUIRE(f[0].size() == 3 * bands.size());
  for (std::size_t d = 0; d < f[0].size(); ++d) {
    double m = 0, s = 0;
    for (const auto& r : f) m += r[d];
    m /= 12.0;
    for (const auto& r : f) s += (r[d] - m) * (r[d] - m);
    CHECK(std::abs(m) < 1e-9);
    CHECK(s / 12.0 == doctest::Approx(1.0));
  }
}
