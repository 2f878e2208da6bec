#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "saf/dsp.hpp"
#include "saf/error.hpp"
#include "test_util.hpp"

using namespace saf;

namespace {

constexpr double kPi = std::numbers::pi;

Recording sine(double f, double fs, std::size_t n, double amp = 1.0, double phase = 0.0) {
  auto r = Recording::zeros(1, n, fs);
  for (std::size_t i = 0; i < n; ++i) r.data[i] = amp * std::sin(2 * kPi * f * i / fs + phase);
  return r;
}

// Single-bin DFT amplitude over [begin, end); pick spans holding whole periods.
double tone_amp(std::span<const double> x, double fs, double f, std::size_t begin, std::size_t end) {
  std::complex<double> acc{};
  for (std::size_t i = begin; i < end; ++i) acc += x[i] * std::polar(1.0, -2 * kPi * f * i / fs);
  return 2.0 * std::abs(acc) / static_cast<double>(end - begin);
}

double db(double ratio) { return 20.0 * std::log10(ratio); }

PipelineConfig cfg512() { return PipelineConfig{}; }

}  // namespace

TEST_CASE("butterworth sections are stable and the designed gains hold") {
  const auto bp = butter_bandpass(4, 1.0, 128.0, 512.0);
  CHECK(bp.sections.size() == 4);
  for (const auto& s : bp.sections) CHECK(s.is_stable());
  CHECK(std::abs(db(bp.gain_at(10.0, 512.0))) < 0.1);
  CHECK(db(bp.gain_at(1.0, 512.0)) == doctest::Approx(-3.01).epsilon(0.02));
  CHECK(db(bp.gain_at(128.0, 512.0)) == doctest::Approx(-3.01).epsilon(0.02));
  CHECK_THROWS_AS(butter_lowpass(3, 10.0, 100.0), ConfigError);
  CHECK_THROWS_AS(butter_lowpass(4, 60.0, 100.0), ConfigError);
}

TEST_CASE("bandpass passes 10 Hz and removes 0.1 Hz and DC") {
  const double fs = 512.0;
  const std::size_t n = 512 * 60;
  SUBCASE("10 Hz within 1 dB") {
    const auto out = bandpass(sine(10.0, fs, n), cfg512());
    const double a = tone_amp(out.data, fs, 10.0, 512 * 10, 512 * 50);
    CHECK(std::abs(db(a)) <= 1.0);
  }
  SUBCASE("0.1 Hz attenuated at least 40 dB") {
    const auto out = bandpass(sine(0.1, fs, n), cfg512());
    const double a = tone_amp(out.data, fs, 0.1, 512 * 10, 512 * 50);
    CHECK(db(a) <= -40.0);
  }
  SUBCASE("DC offset on white noise") {
    auto r = Recording::zeros(1, n, fs);
    saf::Rng rng(8);
    for (auto& v : r.data) v = 5.0 + rng.normal();
    const auto out = bandpass(r, cfg512());
    double mean = 0.0;
    for (double v : out.data) mean += v;
    mean /= static_cast<double>(n);
    CHECK(std::abs(mean) < 0.01);
  }
}

TEST_CASE("notch removes 60 Hz and spares 30 Hz") {
  const double fs = 512.0;
  const std::size_t n = 512 * 30;
  auto cfg = cfg512();
  const auto a60 = tone_amp(notch(sine(60.0, fs, n), cfg).data, fs, 60.0, 512 * 5, 512 * 25);
  const auto a30 = tone_amp(notch(sine(30.0, fs, n), cfg).data, fs, 30.0, 512 * 5, 512 * 25);
  CHECK(db(a60) <= -30.0);
  CHECK(std::abs(db(a30)) <= 1.0);
  const auto zero = notch(Recording::zeros(2, 1000, fs), cfg);
  for (double v : zero.data) CHECK(v == 0.0);
}

TEST_CASE("forward-backward filtering has zero lag") {
  const double fs = 512.0;
  const std::size_t n = 4096;
  const auto in = sine(7.3, fs, n);
  const auto out = bandpass(in, cfg512());
  // Cross-correlation over the interior for lags in [-20, 20].
  int best_lag = 1000;
  double best = -1e300;
  for (int lag = -20; lag <= 20; ++lag) {
    double acc = 0.0;
    for (std::size_t i = 500; i + 500 < n; ++i) acc += in.data[i] * out.data[static_cast<std::size_t>(static_cast<int>(i) + lag)];
    if (acc > best) {
      best = acc;
      best_lag = lag;
    }
  }
  CHECK(best_lag == 0);
}

TEST_CASE("filters are linear") {
  saf::Rng rng(21);
  auto x = Recording::zeros(2, 3000, 512.0), z = x, mix = x;
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    x.data[i] = rng.normal();
    z.data[i] = rng.normal() * 3.0;
    mix.data[i] = 2.5 * x.data[i] - 0.75 * z.data[i];
  }
  const auto cfg = cfg512();
  for (auto stage : {0, 1}) {
    auto f = [&](const Recording& r) { return stage == 0 ? bandpass(r, cfg) : notch(r, cfg); };
    const auto fx = f(x), fz = f(z), fm = f(mix);
    double err = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < fm.data.size(); ++i) {
      const double want = 2.5 * fx.data[i] - 0.75 * fz.data[i];
      err = std::max(err, std::abs(fm.data[i] - want));
      ref = std::max(ref, std::abs(want));
    }
    CHECK(err <= 1e-9 * ref);
  }
}

TEST_CASE("resample 30000 -> 512") {
  SUBCASE("length arithmetic") {
    CHECK(resample(Recording::zeros(1, 30000, 30000.0), 512.0).samples == 512);
    CHECK(resample(Recording::zeros(1, 29999, 30000.0), 512.0).samples == 511);
  }
  SUBCASE("DC preserved away from the edges") {
    auto r = Recording::zeros(1, 30000 * 3, 30000.0);
    std::fill(r.data.begin(), r.data.end(), 3.0);
    const auto out = resample(r, 512.0);
    CHECK(out.sample_rate_hz == 512.0);
    for (std::size_t i = 100; i + 100 < out.samples; ++i) CHECK(out.data[i] == doctest::Approx(3.0).epsilon(1e-3 / 3));
  }
  SUBCASE("10 Hz sine keeps its amplitude") {
    const auto out = resample(sine(10.0, 30000.0, 30000 * 4), 512.0);
    REQUIRE(out.samples == 2048);
    // Whole 10 Hz periods: 512 samples is 10 periods.
    CHECK(tone_amp(out.data, 512.0, 10.0, 512, 1536) == doctest::Approx(1.0).epsilon(0.02));
    CHECK(tone_amp(out.data, 512.0, 11.0, 512, 1536) < 0.02);
  }
  SUBCASE("aliasing band suppressed") {
    // 700 Hz folds to 188 Hz at 512 Hz; the anti-alias FIR must remove it.
    const auto out = resample(sine(700.0, 30000.0, 30000 * 2), 512.0);
    double peak = 0.0;
    for (std::size_t i = 100; i + 100 < out.samples; ++i) peak = std::max(peak, std::abs(out.data[i]));
    CHECK(db(peak) <= -50.0);
  }
  SUBCASE("upsampling rejected") { CHECK_THROWS_AS(resample(Recording::zeros(1, 10, 100.0), 200.0), ConfigError); }
}

TEST_CASE("slice_epochs partitions the prefix") {
  auto cfg = cfg512();
  SUBCASE("61.5 s -> 10 epochs") {
    const auto r = Recording::zeros(3, static_cast<std::size_t>(61.5 * 512), 512.0);
    const auto epochs = slice_epochs(r, cfg, 1, "s");
    REQUIRE(epochs.size() == 10);
    CHECK(epochs[0].samples == 3072);
    CHECK(epochs[0].channels == 3);
    CHECK(epochs[9].y == 1);
    CHECK(epochs[9].subject == "s");
  }
  SUBCASE("5.9 s -> none") {
    CHECK(slice_epochs(Recording::zeros(1, static_cast<std::size_t>(5.9 * 512), 512.0), cfg, 0, "s").empty());
  }
  SUBCASE("12 s concatenation equals the input") {
    auto r = Recording::zeros(2, 12 * 512, 512.0);
    saf::Rng rng(1);
    for (auto& v : r.data) v = rng.normal();
    const auto epochs = slice_epochs(r, cfg, 0, "s");
    REQUIRE(epochs.size() == 2);
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t m = 0; m < 3072; ++m)
          CHECK(epochs[k].x[c * 3072 + m] == static_cast<float>(r.data[c * r.samples + k * 3072 + m]));
  }
}

TEST_CASE("pipeline order: notch follows bandpass") {
  const double fs = 512.0;
  const std::size_t n = 512 * 12;
  auto rec = Recording::zeros(1, n, fs);
  bool saw_bandpass = false;
  PipelineOptions opt;
  opt.after_stage = [&](PipelineStage stage, Recording& r) {
    if (stage == PipelineStage::kBandpass) {
      saw_bandpass = true;
      for (std::size_t i = 0; i < r.samples; ++i) r.data[i] += std::sin(2 * kPi * 60.0 * i / fs);
    }
  };
  const auto epochs = preprocess_pipeline(rec, cfg512(), 0, "s", opt);
  CHECK(saw_bandpass);
  REQUIRE(epochs.size() == 2);
  std::vector<double> tail(epochs[1].x.begin(), epochs[1].x.end());
  CHECK(db(tone_amp(tail, fs, 60.0, 512, 2560)) <= -30.0);
}

TEST_CASE("pipeline config validation") {
  PipelineConfig cfg;
  cfg.band_hi_hz = 256.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.notch_hz = {300.0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.butter_order = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(PipelineConfig{}.validate());
}
