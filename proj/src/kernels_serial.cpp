// Reference kernels: the defining sums written out directly, one output
// element at a time. Slow; kept for tests and the benchmark baseline.
#include <cstdint>

#include "saf/kernels.hpp"

namespace saf::kernels::serial {

template <class T>
void temporal_conv_forward(const TemporalConvShape& s, const T* x, const T* w, T* y) {
  const auto W = static_cast<std::int64_t>(s.width);
  const auto pad = static_cast<std::int64_t>(s.pad_left());
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t o = 0; o < s.out_channels; ++o)
      for (std::size_t r = 0; r < s.rows; ++r)
        for (std::int64_t t = 0; t < W; ++t) {
          const std::size_t i = o / s.multiplier();
          T sum = 0;
          for (std::size_t k = 0; k < s.taps; ++k) {
            const std::int64_t src = t + static_cast<std::int64_t>(k) - pad;
            if (src < 0 || src >= W) continue;
            sum += w[o * s.taps + k] *
                   x[((b * s.in_channels + i) * s.rows + r) * s.width + static_cast<std::size_t>(src)];
          }
          y[((b * s.out_channels + o) * s.rows + r) * s.width + static_cast<std::size_t>(t)] = sum;
        }
}

template <class T>
void temporal_conv_backward(const TemporalConvShape& s, const T* x, const T* w, const T* dy,
                            T* dx, T* dw) {
  const auto W = static_cast<std::int64_t>(s.width);
  const auto pad = static_cast<std::int64_t>(s.pad_left());
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t o = 0; o < s.out_channels; ++o)
      for (std::size_t r = 0; r < s.rows; ++r)
        for (std::int64_t t = 0; t < W; ++t) {
          const std::size_t i = o / s.multiplier();
          const T g = dy[((b * s.out_channels + o) * s.rows + r) * s.width + static_cast<std::size_t>(t)];
          for (std::size_t k = 0; k < s.taps; ++k) {
            const std::int64_t src = t + static_cast<std::int64_t>(k) - pad;
            if (src < 0 || src >= W) continue;
            const std::size_t xi =
                ((b * s.in_channels + i) * s.rows + r) * s.width + static_cast<std::size_t>(src);
            if (dx != nullptr) dx[xi] += w[o * s.taps + k] * g;
            if (dw != nullptr) dw[o * s.taps + k] += x[xi] * g;
          }
        }
}

template <class T>
void spatial_conv_forward(const SpatialConvShape& s, const T* x, const T* w, T* y) {
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t o = 0; o < s.out_channels(); ++o)
      for (std::size_t t = 0; t < s.width; ++t) {
        const std::size_t g = o / s.depth;
        T sum = 0;
        for (std::size_t r = 0; r < s.rows; ++r) {
          sum += w[o * s.rows + r] * x[((b * s.groups + g) * s.rows + r) * s.width + t];
        }
        y[(b * s.out_channels() + o) * s.width + t] = sum;
      }
}

template <class T>
void spatial_conv_backward(const SpatialConvShape& s, const T* x, const T* w, const T* dy, T* dx,
                           T* dw) {
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t o = 0; o < s.out_channels(); ++o)
      for (std::size_t t = 0; t < s.width; ++t) {
        const std::size_t g = o / s.depth;
        const T grad = dy[(b * s.out_channels() + o) * s.width + t];
        for (std::size_t r = 0; r < s.rows; ++r) {
          const std::size_t xi = ((b * s.groups + g) * s.rows + r) * s.width + t;
          if (dx != nullptr) dx[xi] += w[o * s.rows + r] * grad;
          if (dw != nullptr) dw[o * s.rows + r] += x[xi] * grad;
        }
      }
}

template <class T>
void pointwise_conv_forward(const PointwiseConvShape& s, const T* x, const T* w, T* y) {
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t o = 0; o < s.out_channels; ++o)
      for (std::size_t t = 0; t < s.width; ++t) {
        T sum = 0;
        for (std::size_t i = 0; i < s.in_channels; ++i) {
          sum += w[o * s.in_channels + i] * x[(b * s.in_channels + i) * s.width + t];
        }
        y[(b * s.out_channels + o) * s.width + t] = sum;
      }
}

template <class T>
void pointwise_conv_backward(const PointwiseConvShape& s, const T* x, const T* w, const T* dy,
                             T* dx, T* dw) {
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t o = 0; o < s.out_channels; ++o)
      for (std::size_t t = 0; t < s.width; ++t) {
        const T grad = dy[(b * s.out_channels + o) * s.width + t];
        for (std::size_t i = 0; i < s.in_channels; ++i) {
          const std::size_t xi = (b * s.in_channels + i) * s.width + t;
          if (dx != nullptr) dx[xi] += w[o * s.in_channels + i] * grad;
          if (dw != nullptr) dw[o * s.in_channels + i] += x[xi] * grad;
        }
      }
}

void filtfilt_channels(const BiquadCascade& sos, double* data, std::size_t channels,
                       std::size_t samples) {
  for (std::size_t c = 0; c < channels; ++c) {
    sos_filtfilt(sos, std::span<double>(data + c * samples, samples));
  }
}

#define SAF_INSTANTIATE_SERIAL(T)                                                              \
  template void temporal_conv_forward<T>(const TemporalConvShape&, const T*, const T*, T*);    \
  template void temporal_conv_backward<T>(const TemporalConvShape&, const T*, const T*,        \
                                          const T*, T*, T*);                                   \
  template void spatial_conv_forward<T>(const SpatialConvShape&, const T*, const T*, T*);      \
  template void spatial_conv_backward<T>(const SpatialConvShape&, const T*, const T*,          \
                                         const T*, T*, T*);                                    \
  template void pointwise_conv_forward<T>(const PointwiseConvShape&, const T*, const T*, T*);  \
  template void pointwise_conv_backward<T>(const PointwiseConvShape&, const T*, const T*,      \
                                           const T*, T*, T*);

SAF_INSTANTIATE_SERIAL(float)
SAF_INSTANTIATE_SERIAL(double)

}  // namespace saf::kernels::serial
