#include "saf/synth.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "saf/error.hpp"
#include "saf/ndf_io.hpp"
#include "saf/random.hpp"

namespace saf::synth {
namespace {

constexpr std::array<std::array<double, 2>, kBands> kBandEdges{{{1, 4}, {4, 8}, {8, 13}, {13, 30}, {30, 100}}};

// Stream tags for derive_seed.
constexpr std::uint64_t kSubjectStream = 0x5b;
constexpr std::uint64_t kNoiseStream = 0x6e;
constexpr std::uint64_t kArtifactStream = 0x7a;

struct SubjectTraits {
  Eigen::MatrixXd mixing;        // I + beta * G_j
  BandAmplitudes tilt{};         // multiplicative per-band factor
  double line_scale = 0.0;       // u_j
};

SubjectTraits subject_traits(const SynthConfig& cfg, std::size_t j) {
  Rng rng(derive_seed(cfg.seed, kSubjectStream, j));
  SubjectTraits t;
  const auto C = static_cast<Eigen::Index>(cfg.channels);
  t.mixing = Eigen::MatrixXd::Identity(C, C);
  for (Eigen::Index r = 0; r < C; ++r)
    for (Eigen::Index c = 0; c < C; ++c) t.mixing(r, c) += cfg.subject_bias * rng.normal();
  for (auto& f : t.tilt) f = std::exp(cfg.subject_bias * cfg.tilt_scale * rng.normal());
  t.line_scale = rng.uniform();
  return t;
}

// Gaussian noise confined to [lo, hi) Hz with unit expected RMS, built in
// the frequency domain. The scale is the analytic one so per-recording power
// still fluctuates like real noise.
std::vector<double> band_noise(std::size_t n, double fs, double lo, double hi, Rng& rng) {
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> spec(n / 2 + 1, {0.0, 0.0});
  std::size_t bins = 0;
  for (std::size_t k = 1; k < spec.size(); ++k) {
    if (2 * k == n) break;  // Nyquist bin is real-only, leave it empty
    const double f = static_cast<double>(k) * fs / static_cast<double>(n);
    if (f >= lo && f < hi) {
      const double re = rng.normal();
      const double im = rng.normal();
      spec[k] = {re, im};
      ++bins;
    }
  }
  std::vector<double> out(n, 0.0);
  if (bins == 0) return out;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  fft.inv(out, spec, static_cast<Eigen::Index>(n));
  // Each occupied bin adds variance 4/n^2 after the 1/n inverse scaling.
  const double expected_rms = 2.0 * std::sqrt(static_cast<double>(bins)) / static_cast<double>(n);
  for (double& v : out) v /= expected_rms;
  return out;
}

}  // namespace

void SynthConfig::validate() const {
  if (subjects < 1 || channels < 1) throw ConfigError("synth: subjects and channels must be >= 1");
  if (!(fs > 0.0 && duration_s > 0.0)) throw ConfigError("synth: fs and duration_s must be positive");
  if (std::llround(fs * duration_s) < 2) throw ConfigError("synth: recording shorter than 2 samples");
  for (const auto& sig : class_signature)
    for (double a : sig)
      if (!(a >= 0.0 && std::isfinite(a))) throw ConfigError("synth: band amplitudes must be >= 0");
  if (!(subject_bias >= 0.0 && tilt_scale >= 0.0)) throw ConfigError("synth: subject_bias and tilt_scale must be >= 0");
  if (!(line_noise_amp >= 0.0 && line_freq_hz > 0.0)) throw ConfigError("synth: invalid line noise settings");
  if (!(artifact_rate_per_min >= 0.0 && artifact_gain >= 0.0)) throw ConfigError("synth: invalid artifact settings");
}

std::string subject_id(std::size_t j) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "S%02zu", j + 1);
  return buf;
}

Recording generate_subject_recording(const SynthConfig& cfg, std::size_t subject, int y) {
  cfg.validate();
  if (subject >= cfg.subjects) throw ConfigError("synth: subject index out of range");
  if (y != 0 && y != 1) throw ConfigError("synth: class must be 0 or 1");
  const auto traits = subject_traits(cfg, subject);
  const std::size_t C = cfg.channels;
  const auto N = static_cast<std::size_t>(std::llround(cfg.fs * cfg.duration_s));
  const double nyquist = cfg.fs / 2.0;
  const auto cls = static_cast<std::size_t>(y);

  Rng noise(derive_seed(cfg.seed, kNoiseStream, subject, cls));
  Eigen::MatrixXd sources = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(C), static_cast<Eigen::Index>(N));
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t b = 0; b < kBands; ++b) {
      const double amp = cfg.class_signature[cls][b] * traits.tilt[b];
      const double lo = kBandEdges[b][0];
      const double hi = std::min(kBandEdges[b][1], nyquist);
      if (amp == 0.0 || lo >= hi) continue;
      const auto comp = band_noise(N, cfg.fs, lo, hi, noise);
      for (std::size_t n = 0; n < N; ++n) sources(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(n)) += amp * comp[n];
    }
  }
  const Eigen::MatrixXd mixed = traits.mixing * sources;

  Recording rec = Recording::zeros(C, N, cfg.fs);
  for (std::size_t c = 0; c < C; ++c) {
    auto ch = rec.channel(c);
    for (std::size_t n = 0; n < N; ++n) ch[n] = mixed(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(n));
  }

  if (cfg.line_noise_amp > 0.0 && cfg.line_freq_hz < nyquist) {
    const double a = cfg.line_noise_amp * traits.line_scale;
    const double phase = noise.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t c = 0; c < C; ++c) {
      auto ch = rec.channel(c);
      for (std::size_t n = 0; n < N; ++n) {
        ch[n] += a * std::sin(2.0 * std::numbers::pi * cfg.line_freq_hz * static_cast<double>(n) / cfg.fs + phase);
      }
    }
  }

  if (cfg.artifact_rate_per_min > 0.0 && cfg.artifact_gain > 0.0) {
    std::vector<double> rms(C);
    for (std::size_t c = 0; c < C; ++c) {
      double ss = 0.0;
      for (double v : rec.channel(c)) ss += v * v;
      rms[c] = std::sqrt(ss / static_cast<double>(N));
    }
    Rng art(derive_seed(cfg.seed, kArtifactStream, subject, cls));
    const auto len = static_cast<std::size_t>(std::llround(0.5 * cfg.fs));
    const double rate_per_s = cfg.artifact_rate_per_min / 60.0;
    double t = art.exponential(rate_per_s);
    while (true) {
      const auto start = static_cast<std::size_t>(std::llround(t * cfg.fs));
      if (start + len > N) break;
      for (std::size_t c = 0; c < C; ++c) {
        auto ch = rec.channel(c);
        for (std::size_t n = 0; n < len; ++n) {
          const double env = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / static_cast<double>(len));
          ch[start + n] += cfg.artifact_gain * rms[c] * env * art.normal();
        }
      }
      t += 0.5 + art.exponential(rate_per_s);
    }
  }
  return rec;
}

EpochSet generate_epochs(const SynthConfig& cfg, const DatasetOptions& options) {
  cfg.validate();
  options.pipeline.validate();
  if (options.apply_asr) options.asr.validate();
  EpochSet set;
  for (std::size_t j = 0; j < cfg.subjects; ++j) {
    const std::string id = subject_id(j);
    std::array<Recording, 2> recs;
    for (int y = 0; y < 2; ++y) {
      recs[static_cast<std::size_t>(y)] = generate_subject_recording(cfg, j, y);
      if (recs[static_cast<std::size_t>(y)].sample_rate_hz != options.pipeline.target_rate_hz) {
        recs[static_cast<std::size_t>(y)] = resample(recs[static_cast<std::size_t>(y)], options.pipeline.target_rate_hz);
      }
    }
    PipelineOptions popts;
    AsrModel asr;
    if (options.apply_asr) {
      const auto calib = select_calibration(filter_stages(recs[0], options.pipeline), options.asr);
      asr = asr_fit(calib, options.asr);
      popts.asr = &asr;
      popts.asr_config = options.asr;
    }
    for (int y = 0; y < 2; ++y) {
      auto epochs = preprocess_pipeline(recs[static_cast<std::size_t>(y)], options.pipeline, y, id, popts);
      for (auto& e : epochs) set.epochs.push_back(std::move(e));
    }
  }
  set.reindex();
  if (!options.holdout_subject.empty()) return loso_split(set, options.holdout_subject, cfg.seed, options.ratios);
  return split_dataset(set, options.ratios, cfg.seed);
}

Manifest generate_dataset(const SynthConfig& cfg, const DatasetOptions& options,
                          const std::filesystem::path& out_dir) {
  const EpochSet set = generate_epochs(cfg, options);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "epochs", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "epochs").string() + ": " + ec.message());
  Manifest manifest;
  std::vector<std::size_t> counter(set.num_subjects() * 2, 0);
  for (const auto& e : set.epochs) {
    const std::size_t k = static_cast<std::size_t>(e.subject_index) * 2 + static_cast<std::size_t>(e.y);
    char name[64];
    std::snprintf(name, sizeof name, "%s_c%d_%04zu.ndf", e.subject.c_str(), e.y, counter[k]++);
    const std::filesystem::path rel = std::filesystem::path("epochs") / name;
    write_ndf(e, out_dir / rel);
    manifest.rows.push_back({rel.generic_string(), e.subject, e.y, e.split});
  }
  write_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

}  // namespace saf::synth
