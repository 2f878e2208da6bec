#pragma once

#include <cstddef>

#include "saf/dsp.hpp"

// Data-parallel inner loops. Every kernel exists twice: the OpenMP version in
// saf::kernels, and a direct transcription of the defining sums in
// saf::kernels::serial that the tests use as the reference. Each output element
// of a parallel kernel is owned by exactly one thread and reduced in a fixed
// order, so results do not depend on the thread count. Backward kernels
// accumulate (+=) into the gradient buffers; a null gradient pointer skips
// that output.
namespace saf::kernels {

// Input [B, in_channels, rows, width] -> output [B, out_channels, rows, width],
// out_channels = in_channels * multiplier; output channel o reads input channel
// o / multiplier. Kernel [out_channels, taps] runs along width with "same"
// padding (left pad (taps - 1) / 2).
struct TemporalConvShape {
  std::size_t batch, in_channels, rows, width, out_channels, taps;
  std::size_t multiplier() const { return out_channels / in_channels; }
  std::size_t pad_left() const { return (taps - 1) / 2; }
};

// Input [B, groups, rows, width] -> output [B, groups * depth, width]; output
// channel o collapses the rows of input group o / depth with weights w[o, rows].
struct SpatialConvShape {
  std::size_t batch, groups, rows, width, depth;
  std::size_t out_channels() const { return groups * depth; }
};

// Input [B, in_channels, width] -> output [B, out_channels, width], w[out, in].
struct PointwiseConvShape {
  std::size_t batch, in_channels, width, out_channels;
};

template <class T>
void temporal_conv_forward(const TemporalConvShape& s, const T* x, const T* w, T* y);
template <class T>
void temporal_conv_backward(const TemporalConvShape& s, const T* x, const T* w, const T* dy,
                            T* dx, T* dw);

template <class T>
void spatial_conv_forward(const SpatialConvShape& s, const T* x, const T* w, T* y);
template <class T>
void spatial_conv_backward(const SpatialConvShape& s, const T* x, const T* w, const T* dy,
                           T* dx, T* dw);

template <class T>
void pointwise_conv_forward(const PointwiseConvShape& s, const T* x, const T* w, T* y);
template <class T>
void pointwise_conv_backward(const PointwiseConvShape& s, const T* x, const T* w, const T* dy,
                             T* dx, T* dw);

// Zero-phase filtering of each channel of a channel-major buffer.
void filtfilt_channels(const BiquadCascade& sos, double* data, std::size_t channels,
                       std::size_t samples);

namespace serial {

template <class T>
void temporal_conv_forward(const TemporalConvShape& s, const T* x, const T* w, T* y);
template <class T>
void temporal_conv_backward(const TemporalConvShape& s, const T* x, const T* w, const T* dy,
                            T* dx, T* dw);

template <class T>
void spatial_conv_forward(const SpatialConvShape& s, const T* x, const T* w, T* y);
template <class T>
void spatial_conv_backward(const SpatialConvShape& s, const T* x, const T* w, const T* dy,
                           T* dx, T* dw);

template <class T>
void pointwise_conv_forward(const PointwiseConvShape& s, const T* x, const T* w, T* y);
template <class T>
void pointwise_conv_backward(const PointwiseConvShape& s, const T* x, const T* w, const T* dy,
                             T* dx, T* dw);

void filtfilt_channels(const BiquadCascade& sos, double* data, std::size_t channels,
                       std::size_t samples);

}  // namespace serial
}  // namespace saf::kernels
