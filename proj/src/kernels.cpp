#include "saf/kernels.hpp"

#include <algorithm>
#include <cstdint>

namespace saf::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

using Index = std::int64_t;

}  // namespace

template <class T>
void temporal_conv_forward(const TemporalConvShape& s, const T* x, const T* w, T* y) {
  const Index W = static_cast<Index>(s.width);
  const Index pad = static_cast<Index>(s.pad_left());
  const std::size_t mult = s.multiplier();
  const Index units = static_cast<Index>(s.batch * s.out_channels * s.rows);
  const bool par = s.batch * s.out_channels * s.rows * s.width * s.taps > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (Index u = 0; u < units; ++u) {
    const std::size_t r = static_cast<std::size_t>(u) % s.rows;
    const std::size_t o = (static_cast<std::size_t>(u) / s.rows) % s.out_channels;
    const std::size_t b = static_cast<std::size_t>(u) / (s.rows * s.out_channels);
    const std::size_t i = o / mult;
    const T* xr = x + ((b * s.in_channels + i) * s.rows + r) * s.width;
    T* yr = y + static_cast<std::size_t>(u) * s.width;
    std::fill(yr, yr + W, T(0));
    const T* wo = w + o * s.taps;
    for (Index k = 0; k < static_cast<Index>(s.taps); ++k) {
      const Index shift = k - pad;
      const Index t0 = std::max<Index>(0, -shift);
      const Index t1 = std::min<Index>(W, W - shift);
      const T wk = wo[k];
      for (Index t = t0; t < t1; ++t) yr[t] += wk * xr[t + shift];
    }
  }
}

template <class T>
void temporal_conv_backward(const TemporalConvShape& s, const T* x, const T* w, const T* dy,
                            T* dx, T* dw) {
  const Index W = static_cast<Index>(s.width);
  const Index pad = static_cast<Index>(s.pad_left());
  const std::size_t mult = s.multiplier();
  const bool par = s.batch * s.out_channels * s.rows * s.width * s.taps > kParallelWork;
  if (dx != nullptr) {
    const Index units = static_cast<Index>(s.batch * s.in_channels * s.rows);
#pragma omp parallel for schedule(static) if (par)
    for (Index u = 0; u < units; ++u) {
      const std::size_t r = static_cast<std::size_t>(u) % s.rows;
      const std::size_t i = (static_cast<std::size_t>(u) / s.rows) % s.in_channels;
      const std::size_t b = static_cast<std::size_t>(u) / (s.rows * s.in_channels);
      T* dxr = dx + static_cast<std::size_t>(u) * s.width;
      for (std::size_t o = i * mult; o < (i + 1) * mult; ++o) {
        const T* dyr = dy + ((b * s.out_channels + o) * s.rows + r) * s.width;
        const T* wo = w + o * s.taps;
        for (Index k = 0; k < static_cast<Index>(s.taps); ++k) {
          const Index shift = k - pad;
          const Index s0 = std::max<Index>(0, shift);
          const Index s1 = std::min<Index>(W, W + shift);
          const T wk = wo[k];
          for (Index t = s0; t < s1; ++t) dxr[t] += wk * dyr[t - shift];
        }
      }
    }
  }
  if (dw != nullptr) {
    const Index outs = static_cast<Index>(s.out_channels);
#pragma omp parallel for schedule(static) if (par)
    for (Index oi = 0; oi < outs; ++oi) {
      const std::size_t o = static_cast<std::size_t>(oi);
      const std::size_t i = o / mult;
      for (Index k = 0; k < static_cast<Index>(s.taps); ++k) {
        const Index shift = k - pad;
        const Index t0 = std::max<Index>(0, -shift);
        const Index t1 = std::min<Index>(W, W - shift);
        T acc = 0;
        for (std::size_t b = 0; b < s.batch; ++b) {
          for (std::size_t r = 0; r < s.rows; ++r) {
            const T* dyr = dy + ((b * s.out_channels + o) * s.rows + r) * s.width;
            const T* xr = x + ((b * s.in_channels + i) * s.rows + r) * s.width;
            for (Index t = t0; t < t1; ++t) acc += dyr[t] * xr[t + shift];
          }
        }
        dw[o * s.taps + static_cast<std::size_t>(k)] += acc;
      }
    }
  }
}

template <class T>
void spatial_conv_forward(const SpatialConvShape& s, const T* x, const T* w, T* y) {
  const std::size_t outs = s.out_channels();
  const Index units = static_cast<Index>(s.batch * outs);
  const bool par = s.batch * outs * s.rows * s.width > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (Index u = 0; u < units; ++u) {
    const std::size_t o = static_cast<std::size_t>(u) % outs;
    const std::size_t b = static_cast<std::size_t>(u) / outs;
    const std::size_t g = o / s.depth;
    T* yr = y + static_cast<std::size_t>(u) * s.width;
    std::fill(yr, yr + s.width, T(0));
    for (std::size_t r = 0; r < s.rows; ++r) {
      const T wr = w[o * s.rows + r];
      const T* xr = x + ((b * s.groups + g) * s.rows + r) * s.width;
      for (std::size_t t = 0; t < s.width; ++t) yr[t] += wr * xr[t];
    }
  }
}

template <class T>
void spatial_conv_backward(const SpatialConvShape& s, const T* x, const T* w, const T* dy, T* dx,
                           T* dw) {
  const std::size_t outs = s.out_channels();
  const bool par = s.batch * outs * s.rows * s.width > kParallelWork;
  if (dx != nullptr) {
    const Index units = static_cast<Index>(s.batch * s.groups);
#pragma omp parallel for schedule(static) if (par)
    for (Index u = 0; u < units; ++u) {
      const std::size_t g = static_cast<std::size_t>(u) % s.groups;
      const std::size_t b = static_cast<std::size_t>(u) / s.groups;
      for (std::size_t r = 0; r < s.rows; ++r) {
        T* dxr = dx + ((b * s.groups + g) * s.rows + r) * s.width;
        for (std::size_t o = g * s.depth; o < (g + 1) * s.depth; ++o) {
          const T wr = w[o * s.rows + r];
          const T* dyr = dy + (b * outs + o) * s.width;
          for (std::size_t t = 0; t < s.width; ++t) dxr[t] += wr * dyr[t];
        }
      }
    }
  }
  if (dw != nullptr) {
    const Index units = static_cast<Index>(outs);
#pragma omp parallel for schedule(static) if (par)
    for (Index u = 0; u < units; ++u) {
      const std::size_t o = static_cast<std::size_t>(u);
      const std::size_t g = o / s.depth;
      for (std::size_t r = 0; r < s.rows; ++r) {
        T acc = 0;
        for (std::size_t b = 0; b < s.batch; ++b) {
          const T* dyr = dy + (b * outs + o) * s.width;
          const T* xr = x + ((b * s.groups + g) * s.rows + r) * s.width;
          for (std::size_t t = 0; t < s.width; ++t) acc += dyr[t] * xr[t];
        }
        dw[o * s.rows + r] += acc;
      }
    }
  }
}

template <class T>
void pointwise_conv_forward(const PointwiseConvShape& s, const T* x, const T* w, T* y) {
  const Index units = static_cast<Index>(s.batch * s.out_channels);
  const bool par = s.batch * s.out_channels * s.in_channels * s.width > kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (Index u = 0; u < units; ++u) {
    const std::size_t o = static_cast<std::size_t>(u) % s.out_channels;
    const std::size_t b = static_cast<std::size_t>(u) / s.out_channels;
    T* yr = y + static_cast<std::size_t>(u) * s.width;
    std::fill(yr, yr + s.width, T(0));
    for (std::size_t i = 0; i < s.in_channels; ++i) {
      const T wi = w[o * s.in_channels + i];
      const T* xr = x + (b * s.in_channels + i) * s.width;
      for (std::size_t t = 0; t < s.width; ++t) yr[t] += wi * xr[t];
    }
  }
}

template <class T>
void pointwise_conv_backward(const PointwiseConvShape& s, const T* x, const T* w, const T* dy,
                             T* dx, T* dw) {
  const bool par = s.batch * s.out_channels * s.in_channels * s.width > kParallelWork;
  if (dx != nullptr) {
    const Index units = static_cast<Index>(s.batch * s.in_channels);
#pragma omp parallel for schedule(static) if (par)
    for (Index u = 0; u < units; ++u) {
      const std::size_t i = static_cast<std::size_t>(u) % s.in_channels;
      const std::size_t b = static_cast<std::size_t>(u) / s.in_channels;
      T* dxr = dx + static_cast<std::size_t>(u) * s.width;
      for (std::size_t o = 0; o < s.out_channels; ++o) {
        const T wi = w[o * s.in_channels + i];
        const T* dyr = dy + (b * s.out_channels + o) * s.width;
        for (std::size_t t = 0; t < s.width; ++t) dxr[t] += wi * dyr[t];
      }
    }
  }
  if (dw != nullptr) {
    const Index units = static_cast<Index>(s.out_channels * s.in_channels);
#pragma omp parallel for schedule(static) if (par)
    for (Index u = 0; u < units; ++u) {
      const std::size_t i = static_cast<std::size_t>(u) % s.in_channels;
      const std::size_t o = static_cast<std::size_t>(u) / s.in_channels;
      T acc = 0;
      for (std::size_t b = 0; b < s.batch; ++b) {
        const T* dyr = dy + (b * s.out_channels + o) * s.width;
        const T* xr = x + (b * s.in_channels + i) * s.width;
        for (std::size_t t = 0; t < s.width; ++t) acc += dyr[t] * xr[t];
      }
      dw[static_cast<std::size_t>(u)] += acc;
    }
  }
}

void filtfilt_channels(const BiquadCascade& sos, double* data, std::size_t channels,
                       std::size_t samples) {
  const Index n = static_cast<Index>(channels);
#pragma omp parallel for schedule(static) if (channels * samples > kParallelWork)
  for (Index c = 0; c < n; ++c) {
    sos_filtfilt(sos, std::span<double>(data + static_cast<std::size_t>(c) * samples, samples));
  }
}

#define SAF_INSTANTIATE_KERNELS(T)                                                             \
  template void temporal_conv_forward<T>(const TemporalConvShape&, const T*, const T*, T*);    \
  template void temporal_conv_backward<T>(const TemporalConvShape&, const T*, const T*,        \
                                          const T*, T*, T*);                                   \
  template void spatial_conv_forward<T>(const SpatialConvShape&, const T*, const T*, T*);      \
  template void spatial_conv_backward<T>(const SpatialConvShape&, const T*, const T*,          \
                                         const T*, T*, T*);                                    \
  template void pointwise_conv_forward<T>(const PointwiseConvShape&, const T*, const T*, T*);  \
  template void pointwise_conv_backward<T>(const PointwiseConvShape&, const T*, const T*,      \
                                           const T*, T*, T*);

SAF_INSTANTIATE_KERNELS(float)
SAF_INSTANTIATE_KERNELS(double)

}  // namespace saf::kernels
