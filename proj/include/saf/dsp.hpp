#pragma once

#include <array>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "saf/asr.hpp"
#include "saf/types.hpp"

namespace saf {

// Normalized second-order section (a0 == 1), transposed direct form II.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;

  bool is_stable() const;
};

struct BiquadCascade {
  std::vector<Biquad> sections;
  std::string description;

  // Steady-state section states for a unit step input (as scipy's sosfilt_zi).
  std::vector<std::array<double, 2>> step_state() const;

  // Magnitude response at frequency f for sample rate fs.
  double gain_at(double f_hz, double fs_hz) const;

  void append(const BiquadCascade& other);
};

// Butterworth designs via the bilinear transform with prewarping. order must be
// even; the cascade holds order/2 sections.
BiquadCascade butter_lowpass(int order, double cutoff_hz, double fs_hz);
BiquadCascade butter_highpass(int order, double cutoff_hz, double fs_hz);
// High-pass at lo cascaded with low-pass at hi, each of the given order.
BiquadCascade butter_bandpass(int order, double lo_hz, double hi_hz, double fs_hz);
BiquadCascade notch_filter(double f0_hz, double q, double fs_hz);

// Single-pass causal filtering, zero initial state.
void sos_filter(const BiquadCascade& sos, std::span<double> x);
// Zero-phase forward-backward filtering with odd-extension padding and
// steady-state initial conditions.
void sos_filtfilt(const BiquadCascade& sos, std::span<double> x);

struct PipelineConfig {
  double band_lo_hz = 1.0;
  double band_hi_hz = 128.0;
  std::vector<double> notch_hz{60.0, 120.0};
  double notch_q = 30.0;
  double target_rate_hz = 512.0;
  double epoch_seconds = 6.0;
  int butter_order = 4;

  void validate() const;
};

// Rational polyphase resampling by L/M (lowest terms) with a Kaiser-window
// anti-alias FIR (beta for 60 dB stopband, cutoff min(pi/L, pi/M)).
Recording resample(const Recording& rec, double target_rate_hz);
Recording bandpass(const Recording& rec, const PipelineConfig& cfg);
Recording notch(const Recording& rec, const PipelineConfig& cfg);

// Non-overlapping windows of round(epoch_seconds * fs) samples; the trailing
// partial window is dropped.
std::vector<Epoch> slice_epochs(const Recording& rec, const PipelineConfig& cfg, int y,
                                const std::string& subject);

enum class PipelineStage { kResample, kBandpass, kNotch, kAsr };

struct PipelineOptions {
  const AsrModel* asr = nullptr;
  AsrConfig asr_config{};
  // Called after each stage with the intermediate recording; lets tests perturb
  // or inspect the signal between stages.
  std::function<void(PipelineStage, Recording&)> after_stage;
};

// resample (if needed) -> bandpass -> notch -> ASR (if a model is given) -> slice,
// each stage over the whole recording.
std::vector<Epoch> preprocess_pipeline(const Recording& rec, const PipelineConfig& cfg, int y,
                                       const std::string& subject,
                                       const PipelineOptions& options = {});

// bandpass then notch; the shared front half of the pipeline (used for ASR calibration).
Recording filter_stages(const Recording& rec, const PipelineConfig& cfg);

}  // namespace saf
