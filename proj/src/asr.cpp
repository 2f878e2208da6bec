#include "saf/asr.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>

#include "saf/error.hpp"

namespace saf {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kMadScale = 1.4826;

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

// (median, 1.4826 * median absolute deviation)
std::pair<double, double> robust_location_scale(const std::vector<double>& v) {
  const double med = median_of(v);
  std::vector<double> dev(v.size());
  std::transform(v.begin(), v.end(), dev.begin(), [med](double x) { return std::abs(x - med); });
  return {med, kMadScale * median_of(std::move(dev))};
}

std::size_t window_samples(double seconds, double fs) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(seconds * fs)));
}

MatrixXd as_matrix(const Recording& rec, std::size_t start, std::size_t len) {
  MatrixXd x(rec.channels, len);
  for (std::size_t c = 0; c < rec.channels; ++c) {
    const auto ch = rec.channel(c);
    for (std::size_t n = 0; n < len; ++n) x(c, n) = ch[start + n];
  }
  return x;
}

MatrixXd pinv(const MatrixXd& a) {
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const VectorXd& s = svd.singularValues();
  const double tol = s.size() > 0 ? 1e-10 * s.maxCoeff() : 0.0;
  VectorXd inv = VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > tol) inv(i) = 1.0 / s(i);
  }
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

std::vector<std::size_t> window_starts(std::size_t n, std::size_t len, std::size_t hop) {
  std::vector<std::size_t> starts;
  if (n <= len) return {0};
  for (std::size_t s = 0; s + len <= n; s += hop) starts.push_back(s);
  if (starts.back() + len < n) starts.push_back(n - len);
  return starts;
}

struct WindowPlan {
  std::size_t length = 0;
  std::vector<std::size_t> starts;
};

WindowPlan plan_windows(const Recording& rec, const AsrConfig& cfg) {
  WindowPlan p;
  p.length = std::min(rec.samples, window_samples(cfg.proc_window_s, rec.sample_rate_hz));
  const auto hop = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(p.length) * (1.0 - cfg.proc_overlap))));
  p.starts = window_starts(rec.samples, p.length, hop);
  return p;
}

// Rejection mask for one window plus its eigenvectors.
struct WindowDecision {
  MatrixXd eigvecs;
  std::vector<bool> rejected;
  bool any = false;
};

WindowDecision decide(const MatrixXd& xw, const AsrModel& model) {
  const MatrixXd cov = xw * xw.transpose() / static_cast<double>(xw.cols());
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  WindowDecision d;
  d.eigvecs = eig.eigenvectors();
  const VectorXd& lambda = eig.eigenvalues();
  const MatrixXd tv = model.threshold * d.eigvecs;
  d.rejected.resize(model.channels);
  for (std::size_t j = 0; j < model.channels; ++j) {
    const double limit = tv.col(static_cast<Eigen::Index>(j)).squaredNorm();
    d.rejected[j] = lambda(static_cast<Eigen::Index>(j)) > limit;
    d.any = d.any || d.rejected[j];
  }
  return d;
}

void check_channels(const Recording& rec, const AsrModel& model) {
  if (rec.channels != model.channels) {
    throw ValidationError("ASR model has " + std::to_string(model.channels) +
                          " channels, recording has " + std::to_string(rec.channels));
  }
}

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ofstream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

}  // namespace

void AsrConfig::validate() const {
  if (!(cutoff_k > 0.0)) throw ConfigError("ASR cutoff_k must be positive");
  if (!(proc_overlap >= 0.0 && proc_overlap < 1.0)) throw ConfigError("ASR overlap must be in [0, 1)");
  if (!(calib_window_s > 0.0 && proc_window_s > 0.0)) throw ConfigError("ASR windows must be positive");
  if (!(calib_z_lo < calib_z_hi)) throw ConfigError("ASR calibration z-range is empty");
}

Recording select_calibration(const Recording& rec, const AsrConfig& cfg) {
  cfg.validate();
  const std::size_t len = window_samples(cfg.calib_window_s, rec.sample_rate_hz);
  const std::size_t windows = rec.samples / len;
  if (windows < cfg.min_calib_windows || windows == 0) return rec;

  std::vector<bool> clean(windows, true);
  std::vector<double> rms(windows);
  for (std::size_t c = 0; c < rec.channels; ++c) {
    const auto ch = rec.channel(c);
    for (std::size_t w = 0; w < windows; ++w) {
      double ss = 0.0;
      for (std::size_t n = w * len; n < (w + 1) * len; ++n) ss += ch[n] * ch[n];
      rms[w] = std::sqrt(ss / static_cast<double>(len));
    }
    const auto [med, scale] = robust_location_scale(rms);
    for (std::size_t w = 0; w < windows; ++w) {
      double z = 0.0;
      if (scale > 0.0) {
        z = (rms[w] - med) / scale;
      } else if (rms[w] != med) {
        z = rms[w] > med ? INFINITY : -INFINITY;
      }
      if (z < cfg.calib_z_lo || z > cfg.calib_z_hi) clean[w] = false;
    }
  }
  const auto kept = static_cast<std::size_t>(std::count(clean.begin(), clean.end(), true));
  if (kept < cfg.min_calib_windows) return rec;

  Recording out = rec;
  out.samples = kept * len;
  out.data.assign(rec.channels * out.samples, 0.0);
  for (std::size_t c = 0; c < rec.channels; ++c) {
    const auto src = rec.channel(c);
    auto dst = out.channel(c);
    std::size_t k = 0;
    for (std::size_t w = 0; w < windows; ++w) {
      if (!clean[w]) continue;
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(w * len), len,
                  dst.begin() + static_cast<std::ptrdiff_t>(k * len));
      ++k;
    }
  }
  return out;
}

AsrModel asr_fit(const Recording& calib, const AsrConfig& cfg) {
  cfg.validate();
  calib.validate();
  const std::size_t len = window_samples(cfg.proc_window_s, calib.sample_rate_hz);
  const std::size_t windows = calib.samples / len;
  if (windows < 2) throw ValidationError("ASR calibration needs at least two processing windows");

  const MatrixXd x = as_matrix(calib, 0, calib.samples);
  const MatrixXd cov = x * x.transpose() / static_cast<double>(calib.samples);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  const MatrixXd& v = eig.eigenvectors();
  const VectorXd root = eig.eigenvalues().cwiseMax(1e-12).cwiseSqrt();

  AsrModel model;
  model.channels = calib.channels;
  model.mixing = v * root.asDiagonal() * v.transpose();

  const MatrixXd comps = v.transpose() * x;
  VectorXd limit(static_cast<Eigen::Index>(calib.channels));
  std::vector<double> rms(windows);
  for (Eigen::Index j = 0; j < comps.rows(); ++j) {
    for (std::size_t w = 0; w < windows; ++w) {
      const auto seg = comps.row(j).segment(static_cast<Eigen::Index>(w * len),
                                            static_cast<Eigen::Index>(len));
      rms[w] = std::sqrt(seg.squaredNorm() / static_cast<double>(len));
    }
    const auto [mu, sigma] = robust_location_scale(rms);
    limit(j) = mu + cfg.cutoff_k * sigma;
  }
  model.threshold = limit.asDiagonal() * v.transpose();
  return model;
}

std::vector<AsrWindowReport> asr_inspect(const Recording& rec, const AsrModel& model,
                                         const AsrConfig& cfg) {
  check_channels(rec, model);
  const auto plan = plan_windows(rec, cfg);
  std::vector<AsrWindowReport> reports;
  for (std::size_t start : plan.starts) {
    const auto d = decide(as_matrix(rec, start, plan.length), model);
    reports.push_back({start, plan.length, d.rejected});
  }
  return reports;
}

Recording asr_apply(const Recording& rec, const AsrModel& model, const AsrConfig& cfg) {
  cfg.validate();
  check_channels(rec, model);
  const auto plan = plan_windows(rec, cfg);
  const std::size_t len = plan.length;
  const auto count = static_cast<std::int64_t>(plan.starts.size());

  // Reconstruction matrices per window; empty means identity.
  std::vector<MatrixXd> recon(plan.starts.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < count; ++i) {
    const auto d = decide(as_matrix(rec, plan.starts[static_cast<std::size_t>(i)], len), model);
    if (!d.any) continue;
    MatrixXd kept = d.eigvecs.transpose() * model.mixing;
    for (std::size_t j = 0; j < model.channels; ++j) {
      if (d.rejected[j]) kept.row(static_cast<Eigen::Index>(j)).setZero();
    }
    recon[static_cast<std::size_t>(i)] = model.mixing * pinv(kept) * d.eigvecs.transpose();
  }

  std::vector<double> weight(len);
  for (std::size_t n = 0; n < len; ++n) {
    weight[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (static_cast<double>(n) + 0.5) /
                                     static_cast<double>(len));
  }
  Recording out = rec;
  std::fill(out.data.begin(), out.data.end(), 0.0);
  std::vector<double> norm(rec.samples, 0.0);
  for (std::size_t i = 0; i < plan.starts.size(); ++i) {
    const std::size_t start = plan.starts[i];
    const MatrixXd xw = as_matrix(rec, start, len);
    const MatrixXd yw = recon[i].size() == 0 ? xw : MatrixXd(recon[i] * xw);
    for (std::size_t n = 0; n < len; ++n) norm[start + n] += weight[n];
    for (std::size_t c = 0; c < rec.channels; ++c) {
      auto dst = out.channel(c);
      for (std::size_t n = 0; n < len; ++n) {
        dst[start + n] += weight[n] * yw(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(n));
      }
    }
  }
  for (std::size_t c = 0; c < rec.channels; ++c) {
    auto dst = out.channel(c);
    for (std::size_t n = 0; n < rec.samples; ++n) dst[n] /= norm[n];
  }
  return out;
}

void write_asr_model(const AsrModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("ASR1", 4);
  put_u32(out, static_cast<std::uint32_t>(model.channels));
  for (const MatrixXd* m : {&model.mixing, &model.threshold}) {
    for (Eigen::Index r = 0; r < m->rows(); ++r) {
      for (Eigen::Index c = 0; c < m->cols(); ++c) put_f64(out, (*m)(r, c));
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

AsrModel read_asr_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<unsigned char> buf{std::istreambuf_iterator<char>(in),
                                       std::istreambuf_iterator<char>()};
  if (buf.size() < 8 || std::memcmp(buf.data(), "ASR1", 4) != 0) {
    throw FormatError("bad ASR model magic in " + path.string());
  }
  std::uint32_t c = 0;
  for (int i = 0; i < 4; ++i) c |= static_cast<std::uint32_t>(buf[4 + i]) << (8 * i);
  if (buf.size() != 8 + 2 * static_cast<std::size_t>(c) * c * 8) {
    throw FormatError("ASR model payload size mismatch in " + path.string());
  }
  AsrModel model;
  model.channels = c;
  std::size_t pos = 8;
  for (MatrixXd* m : {&model.mixing, &model.threshold}) {
    m->resize(c, c);
    for (Eigen::Index r = 0; r < c; ++r) {
      for (Eigen::Index k = 0; k < c; ++k) {
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
        (*m)(r, k) = std::bit_cast<double>(bits);
        pos += 8;
      }
    }
  }
  return model;
}

}  // namespace saf
