#include "saf/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <sstream>

#include "saf/error.hpp"
#include "saf/kernels.hpp"

namespace saf {
namespace {

constexpr double kPi = std::numbers::pi;

Biquad normalized(double b0, double b1, double b2, double a0, double a1, double a2) {
  return {b0 / a0, b1 / a0, b2 / a0, a1 / a0, a2 / a0};
}

void check_order(int order) {
  if (order < 2 || order % 2 != 0) throw ConfigError("Butterworth order must be a positive even integer");
}

void check_corner(double f_hz, double fs_hz, const char* what) {
  if (!(f_hz > 0.0) || f_hz >= fs_hz / 2.0) {
    std::ostringstream os;
    os << what << " " << f_hz << " Hz must lie in (0, Nyquist=" << fs_hz / 2.0 << ")";
    throw ConfigError(os.str());
  }
}

// Q of the k-th pole pair of an even-order Butterworth prototype.
double butter_q(int order, int k) {
  return 1.0 / (2.0 * std::sin((2.0 * k + 1.0) * kPi / (2.0 * order)));
}

void run_cascade(const BiquadCascade& sos, std::span<double> x,
                 std::vector<std::array<double, 2>> state) {
  for (std::size_t s = 0; s < sos.sections.size(); ++s) {
    const Biquad& q = sos.sections[s];
    double z1 = state[s][0];
    double z2 = state[s][1];
    for (double& v : x) {
      const double in = v;
      const double out = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * out + z2;
      z2 = q.b2 * in - q.a2 * out;
      v = out;
    }
  }
}

std::vector<std::array<double, 2>> scaled(std::vector<std::array<double, 2>> zi, double s) {
  for (auto& z : zi) {
    z[0] *= s;
    z[1] *= s;
  }
  return zi;
}

void check_rate(const Recording& rec, const PipelineConfig& cfg) {
  if (rec.sample_rate_hz != cfg.target_rate_hz) {
    throw ValidationError("recording rate differs from pipeline target rate; resample first");
  }
}

Recording filtered(const Recording& rec, const BiquadCascade& sos) {
  Recording out = rec;
  kernels::filtfilt_channels(sos, out.data.data(), out.channels, out.samples);
  return out;
}

}  // namespace

bool Biquad::is_stable() const {
  // Roots of z^2 + a1 z + a2 strictly inside the unit circle.
  const std::complex<double> disc = std::sqrt(std::complex<double>(a1 * a1 - 4.0 * a2));
  const auto r1 = (-a1 + disc) / 2.0;
  const auto r2 = (-a1 - disc) / 2.0;
  return std::abs(r1) < 1.0 && std::abs(r2) < 1.0 && std::isfinite(b0) && std::isfinite(b1) &&
         std::isfinite(b2);
}

std::vector<std::array<double, 2>> BiquadCascade::step_state() const {
  std::vector<std::array<double, 2>> zi;
  double in = 1.0;
  for (const Biquad& q : sections) {
    const double out = in * (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double z2 = q.b2 * in - q.a2 * out;
    const double z1 = q.b1 * in - q.a1 * out + z2;
    zi.push_back({z1, z2});
    in = out;
  }
  return zi;
}

double BiquadCascade::gain_at(double f_hz, double fs_hz) const {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * kPi * f_hz / fs_hz);
  const std::complex<double> z2 = z1 * z1;
  double g = 1.0;
  for (const Biquad& q : sections) {
    g *= std::abs((q.b0 + q.b1 * z1 + q.b2 * z2) / (1.0 + q.a1 * z1 + q.a2 * z2));
  }
  return g;
}

void BiquadCascade::append(const BiquadCascade& other) {
  sections.insert(sections.end(), other.sections.begin(), other.sections.end());
  description += description.empty() ? other.description : " + " + other.description;
}

BiquadCascade butter_lowpass(int order, double cutoff_hz, double fs_hz) {
  check_order(order);
  check_corner(cutoff_hz, fs_hz, "low-pass corner");
  BiquadCascade out;
  const double w0 = 2.0 * kPi * cutoff_hz / fs_hz;
  const double c = std::cos(w0);
  for (int k = 0; k < order / 2; ++k) {
    const double alpha = std::sin(w0) / (2.0 * butter_q(order, k));
    out.sections.push_back(
        normalized((1.0 - c) / 2.0, 1.0 - c, (1.0 - c) / 2.0, 1.0 + alpha, -2.0 * c, 1.0 - alpha));
  }
  out.description = "butterworth lowpass order " + std::to_string(order) + " @ " +
                    std::to_string(cutoff_hz) + " Hz";
  return out;
}

BiquadCascade butter_highpass(int order, double cutoff_hz, double fs_hz) {
  check_order(order);
  check_corner(cutoff_hz, fs_hz, "high-pass corner");
  BiquadCascade out;
  const double w0 = 2.0 * kPi * cutoff_hz / fs_hz;
  const double c = std::cos(w0);
  for (int k = 0; k < order / 2; ++k) {
    const double alpha = std::sin(w0) / (2.0 * butter_q(order, k));
    out.sections.push_back(normalized((1.0 + c) / 2.0, -(1.0 + c), (1.0 + c) / 2.0, 1.0 + alpha,
                                      -2.0 * c, 1.0 - alpha));
  }
  out.description = "butterworth highpass order " + std::to_string(order) + " @ " +
                    std::to_string(cutoff_hz) + " Hz";
  return out;
}

BiquadCascade butter_bandpass(int order, double lo_hz, double hi_hz, double fs_hz) {
  if (!(lo_hz < hi_hz)) throw ConfigError("band-pass requires lo < hi");
  BiquadCascade out = butter_highpass(order, lo_hz, fs_hz);
  out.append(butter_lowpass(order, hi_hz, fs_hz));
  return out;
}

BiquadCascade notch_filter(double f0_hz, double q, double fs_hz) {
  check_corner(f0_hz, fs_hz, "notch frequency");
  if (!(q > 0.0)) throw ConfigError("notch Q must be positive");
  const double w0 = 2.0 * kPi * f0_hz / fs_hz;
  const double c = std::cos(w0);
  const double alpha = std::sin(w0) / (2.0 * q);
  BiquadCascade out;
  out.sections.push_back(normalized(1.0, -2.0 * c, 1.0, 1.0 + alpha, -2.0 * c, 1.0 - alpha));
  out.description = "notch @ " + std::to_string(f0_hz) + " Hz, Q " + std::to_string(q);
  return out;
}

void sos_filter(const BiquadCascade& sos, std::span<double> x) {
  run_cascade(sos, x, std::vector<std::array<double, 2>>(sos.sections.size(), {0.0, 0.0}));
}

void sos_filtfilt(const BiquadCascade& sos, std::span<double> x) {
  const std::size_t n = x.size();
  if (n == 0 || sos.sections.empty()) return;
  std::size_t padlen = 3 * (2 * sos.sections.size() + 1);
  padlen = std::min(padlen, n - 1);

  std::vector<double> ext(n + 2 * padlen);
  for (std::size_t i = 0; i < padlen; ++i) {
    ext[i] = 2.0 * x[0] - x[padlen - i];
    ext[padlen + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];
  }
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(padlen));

  const auto zi = sos.step_state();
  run_cascade(sos, ext, scaled(zi, ext.front()));
  std::reverse(ext.begin(), ext.end());
  run_cascade(sos, ext, scaled(zi, ext.front()));
  std::reverse(ext.begin(), ext.end());
  std::copy(ext.begin() + static_cast<std::ptrdiff_t>(padlen),
            ext.begin() + static_cast<std::ptrdiff_t>(padlen + n), x.begin());
}

void PipelineConfig::validate() const {
  if (!(target_rate_hz > 0.0)) throw ConfigError("target_rate_hz must be positive");
  const double nyquist = target_rate_hz / 2.0;
  if (!(band_lo_hz > 0.0 && band_lo_hz < band_hi_hz && band_hi_hz < nyquist)) {
    throw ConfigError("band corners must satisfy 0 < lo < hi < Nyquist");
  }
  for (double f : notch_hz) {
    if (!(f > 0.0 && f < nyquist)) throw ConfigError("notch frequency must lie below Nyquist");
  }
  if (!(notch_q > 0.0)) throw ConfigError("notch_q must be positive");
  if (!(epoch_seconds > 0.0)) throw ConfigError("epoch_seconds must be positive");
  if (butter_order < 2 || butter_order % 2 != 0) throw ConfigError("butter_order must be even");
}

Recording resample(const Recording& rec, double target_rate_hz) {
  rec.validate();
  if (!(target_rate_hz > 0.0)) throw ConfigError("target rate must be positive");
  if (target_rate_hz > rec.sample_rate_hz) throw ConfigError("upsampling is not supported");
  if (target_rate_hz == rec.sample_rate_hz) return rec;

  // Rates are treated as rationals with millihertz resolution.
  const auto src = static_cast<std::int64_t>(std::llround(rec.sample_rate_hz * 1000.0));
  const auto dst = static_cast<std::int64_t>(std::llround(target_rate_hz * 1000.0));
  const std::int64_t g = std::gcd(src, dst);
  const std::int64_t up = dst / g;
  const std::int64_t down = src / g;

  const std::int64_t half_len = 10 * std::max(up, down);
  const std::int64_t taps = 2 * half_len + 1;
  const double beta = 0.1102 * (60.0 - 8.7);
  const double i0_beta = std::cyl_bessel_i(0.0, beta);
  const double span = static_cast<double>(std::max(up, down));
  std::vector<double> h(static_cast<std::size_t>(taps));
  for (std::int64_t n = 0; n < taps; ++n) {
    const double m = static_cast<double>(n - half_len);
    const double sinc = m == 0.0 ? 1.0 : std::sin(kPi * m / span) / (kPi * m / span);
    const double ratio = m / static_cast<double>(half_len);
    const double window = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - ratio * ratio))) / i0_beta;
    h[static_cast<std::size_t>(n)] = sinc * window;
  }
  // Each polyphase branch is normalized to unit sum so constants pass exactly.
  for (std::int64_t phase = 0; phase < up; ++phase) {
    double sum = 0.0;
    for (std::int64_t k = phase; k < taps; k += up) sum += h[static_cast<std::size_t>(k)];
    for (std::int64_t k = phase; k < taps; k += up) h[static_cast<std::size_t>(k)] /= sum;
  }

  const auto n_in = static_cast<std::int64_t>(rec.samples);
  const std::int64_t n_out = n_in * up / down;
  Recording out = rec;
  out.sample_rate_hz = target_rate_hz;
  out.samples = static_cast<std::size_t>(n_out);
  out.data.assign(rec.channels * out.samples, 0.0);
  const auto channels = static_cast<std::int64_t>(rec.channels);
#pragma omp parallel for schedule(static)
  for (std::int64_t c = 0; c < channels; ++c) {
    const auto in = rec.channel(static_cast<std::size_t>(c));
    auto dst_ch = out.channel(static_cast<std::size_t>(c));
    for (std::int64_t m = 0; m < n_out; ++m) {
      // Output m sits at upsampled index m*down + half_len of the filtered stream.
      const std::int64_t pos = m * down + half_len;
      const std::int64_t phase = pos % up;
      double acc = 0.0;
      for (std::int64_t k = phase; k < taps; k += up) {
        const std::int64_t j = (pos - k) / up;
        if (j < 0) break;
        if (j >= n_in) continue;
        acc += h[static_cast<std::size_t>(k)] * in[static_cast<std::size_t>(j)];
      }
      dst_ch[static_cast<std::size_t>(m)] = acc;
    }
  }
  return out;
}

Recording bandpass(const Recording& rec, const PipelineConfig& cfg) {
  check_rate(rec, cfg);
  return filtered(rec, butter_bandpass(cfg.butter_order, cfg.band_lo_hz, cfg.band_hi_hz,
                                       rec.sample_rate_hz));
}

Recording notch(const Recording& rec, const PipelineConfig& cfg) {
  check_rate(rec, cfg);
  BiquadCascade sos;
  for (double f : cfg.notch_hz) sos.append(notch_filter(f, cfg.notch_q, rec.sample_rate_hz));
  if (sos.sections.empty()) return rec;
  return filtered(rec, sos);
}

std::vector<Epoch> slice_epochs(const Recording& rec, const PipelineConfig& cfg, int y,
                                const std::string& subject) {
  const auto m = static_cast<std::size_t>(std::llround(cfg.epoch_seconds * rec.sample_rate_hz));
  if (m == 0) throw ConfigError("epoch length rounds to zero samples");
  std::vector<Epoch> out;
  const std::size_t count = rec.samples / m;
  out.reserve(count);
  for (std::size_t e = 0; e < count; ++e) {
    Epoch ep;
    ep.channels = rec.channels;
    ep.samples = m;
    ep.sample_rate_hz = rec.sample_rate_hz;
    ep.y = y;
    ep.subject = subject;
    ep.x.resize(rec.channels * m);
    for (std::size_t c = 0; c < rec.channels; ++c) {
      const auto src = rec.channel(c).subspan(e * m, m);
      std::transform(src.begin(), src.end(), ep.x.begin() + static_cast<std::ptrdiff_t>(c * m),
                     [](double v) { return static_cast<float>(v); });
    }
    out.push_back(std::move(ep));
  }
  return out;
}

Recording filter_stages(const Recording& rec, const PipelineConfig& cfg) {
  return notch(bandpass(rec, cfg), cfg);
}

std::vector<Epoch> preprocess_pipeline(const Recording& rec, const PipelineConfig& cfg, int y,
                                       const std::string& subject,
                                       const PipelineOptions& options) {
  cfg.validate();
  rec.validate();
  const auto hook = [&](PipelineStage stage, Recording& r) {
    if (options.after_stage) options.after_stage(stage, r);
  };
  Recording cur = rec;
  if (cur.sample_rate_hz != cfg.target_rate_hz) {
    cur = resample(cur, cfg.target_rate_hz);
    hook(PipelineStage::kResample, cur);
  }
  cur = bandpass(cur, cfg);
  hook(PipelineStage::kBandpass, cur);
  cur = notch(cur, cfg);
  hook(PipelineStage::kNotch, cur);
  if (options.asr != nullptr) {
    cur = asr_apply(cur, *options.asr, options.asr_config);
    hook(PipelineStage::kAsr, cur);
  }
  return slice_epochs(cur, cfg, y, subject);
}

}  // namespace saf
