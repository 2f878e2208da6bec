#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "saf/error.hpp"
#include "saf/metrics.hpp"

namespace saf::metrics {

Psd welch_psd(std::span<const double> x, double fs, double window_s, double overlap) {
  if (!(fs > 0.0)) throw ValidationError("welch_psd: sample rate must be positive");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ValidationError("welch_psd: overlap must lie in [0, 1)");
  const auto nperseg = static_cast<std::size_t>(std::llround(window_s * fs));
  if (nperseg < 2) throw ValidationError("welch_psd: window shorter than 2 samples");
  if (x.size() < nperseg) throw ValidationError("welch_psd: series shorter than one window");
  const std::size_t noverlap = static_cast<std::size_t>(std::llround(overlap * static_cast<double>(nperseg)));
  const std::size_t step = std::max<std::size_t>(nperseg - noverlap, 1);

  std::vector<double> w(nperseg);
  double wss = 0.0;
  for (std::size_t n = 0; n < nperseg; ++n) {
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(nperseg));
    wss += w[n] * w[n];
  }
  const std::size_t bins = nperseg / 2 + 1;
  Psd psd;
  psd.df = fs / static_cast<double>(nperseg);
  psd.freqs.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) psd.freqs[k] = static_cast<double>(k) * psd.df;
  psd.density.assign(bins, 0.0);

  Eigen::FFT<double> fft;
  std::vector<double> seg(nperseg);
  std::vector<std::complex<double>> spec;
  std::size_t count = 0;
  for (std::size_t start = 0; start + nperseg <= x.size(); start += step) {
    double mean = 0.0;
    for (std::size_t n = 0; n < nperseg; ++n) mean += x[start + n];
    mean /= static_cast<double>(nperseg);
    for (std::size_t n = 0; n < nperseg; ++n) seg[n] = (x[start + n] - mean) * w[n];
    fft.fwd(spec, seg);
    for (std::size_t k = 0; k < bins; ++k) psd.density[k] += std::norm(spec[k]);
    ++count;
  }
  const double scale = 1.0 / (fs * wss * static_cast<double>(count));
  for (std::size_t k = 0; k < bins; ++k) {
    psd.density[k] *= scale;
    const bool nyquist_bin = nperseg % 2 == 0 && k == bins - 1;
    if (k != 0 && !nyquist_bin) psd.density[k] *= 2.0;
  }
  return psd;
}

std::vector<Band> default_bands() {
  return {{"Delta", 1.0, 4.0}, {"Theta", 4.0, 8.0}, {"Alpha", 8.0, 13.0}, {"Beta", 13.0, 30.0}, {"Gamma", 30.0, 100.0}};
}

std::vector<Band> bands_for_rate(double fs) {
  const double nyquist = fs / 2.0;
  std::vector<Band> out;
  for (auto b : default_bands()) {
    if (b.lo_hz >= nyquist) continue;
    b.hi_hz = std::min(b.hi_hz, nyquist);
    out.push_back(b);
  }
  return out;
}

std::vector<double> band_power(const Psd& psd, std::span<const Band> bands) {
  if (psd.freqs.size() < 2 || psd.freqs.size() != psd.density.size()) {
    throw ValidationError("band_power: malformed PSD");
  }
  const double f_max = psd.freqs.back();
  const auto interp = [&](double f) {
    const auto it = std::upper_bound(psd.freqs.begin(), psd.freqs.end(), f);
    const std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(it - psd.freqs.begin()), psd.freqs.size() - 1);
    const std::size_t lo = hi - 1;
    const double t = (f - psd.freqs[lo]) / (psd.freqs[hi] - psd.freqs[lo]);
    return psd.density[lo] + t * (psd.density[hi] - psd.density[lo]);
  };
  std::vector<double> out;
  for (const auto& b : bands) {
    if (!(b.lo_hz >= 0.0 && b.lo_hz < b.hi_hz)) throw ConfigError("band " + b.name + " has an empty range");
    if (b.hi_hz > f_max * (1.0 + 1e-12)) throw ConfigError("band " + b.name + " extends beyond Nyquist");
    std::vector<double> f{b.lo_hz}, p{interp(b.lo_hz)};
    for (std::size_t k = 0; k < psd.freqs.size(); ++k) {
      if (psd.freqs[k] > b.lo_hz && psd.freqs[k] < b.hi_hz) {
        f.push_back(psd.freqs[k]);
        p.push_back(psd.density[k]);
      }
    }
    f.push_back(b.hi_hz);
    p.push_back(interp(std::min(b.hi_hz, f_max)));
    double area = 0.0;
    for (std::size_t i = 1; i < f.size(); ++i) area += 0.5 * (p[i] + p[i - 1]) * (f[i] - f[i - 1]);
    out.push_back(area);
  }
  return out;
}

FeatureMatrix band_power_features(std::span<const Epoch> epochs, std::span<const Band> bands, double window_s) {
  FeatureMatrix out;
  out.reserve(epochs.size());
  std::vector<double> series;
  for (const auto& e : epochs) {
    const double win = std::min(window_s, static_cast<double>(e.samples) / e.sample_rate_hz);
    std::vector<double> row;
    row.reserve(e.channels * bands.size());
    for (std::size_t c = 0; c < e.channels; ++c) {
      const auto ch = e.channel(c);
      series.assign(ch.begin(), ch.end());
      const auto bp = band_power(welch_psd(series, e.sample_rate_hz, win), bands);
      for (double v : bp) row.push_back(std::log(v + 1e-20));
    }
    out.push_back(std::move(row));
  }
  if (out.empty()) return out;
  const std::size_t dims = out.front().size();
  for (std::size_t d = 0; d < dims; ++d) {
    double mean = 0.0;
    for (const auto& r : out) mean += r[d];
    mean /= static_cast<double>(out.size());
    double var = 0.0;
    for (const auto& r : out) var += (r[d] - mean) * (r[d] - mean);
    const double sd = std::sqrt(var / static_cast<double>(out.size()));
    for (auto& r : out) r[d] = sd > 0.0 ? (r[d] - mean) / sd : 0.0;
  }
  return out;
}

}  // namespace saf::metrics
