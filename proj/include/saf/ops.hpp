#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "saf/kernels.hpp"
#include "saf/random.hpp"
#include "saf/tensor.hpp"

// Differentiable primitives. Every op returns a fresh tensor whose backward
// closure accumulates into its inputs' gradient buffers.
namespace saf::nn {

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ValidationError(what);
}

template <class T>
std::vector<std::shared_ptr<Node<T>>> parents_of(std::initializer_list<const BasicTensor<T>*> ts) {
  std::vector<std::shared_ptr<Node<T>>> out;
  for (const auto* t : ts) out.push_back(t->node_ptr());
  return out;
}

}  // namespace detail

template <class T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require(a.shape() == b.shape(), "add: shape mismatch");
  std::vector<T> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + b.values()[i];
  return make_result<T>(a.shape(), std::move(v), detail::parents_of<T>({&a, &b}), [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto& g = p->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <class T>
BasicTensor<T> scale(const BasicTensor<T>& a, T s) {
  std::vector<T> v(a.values().begin(), a.values().end());
  for (auto& x : v) x *= s;
  return make_result<T>(a.shape(), std::move(v), detail::parents_of<T>({&a}), [s](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * self.grad[i];
  });
}

template <class T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require(a.shape() == b.shape(), "mul: shape mismatch");
  std::vector<T> v(a.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * b.values()[i];
  return make_result<T>(a.shape(), std::move(v), detail::parents_of<T>({&a, &b}), [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

template <class T>
BasicTensor<T> sum(const BasicTensor<T>& a) {
  T total = 0;
  for (T v : a.values()) total += v;
  return make_result<T>({1}, {total}, detail::parents_of<T>({&a}), [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (auto& x : g) x += self.grad[0];
  });
}

template <class T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape shape) {
  detail::require(numel_of(shape) == a.numel(), "reshape: element count mismatch");
  std::vector<T> v(a.values().begin(), a.values().end());
  return make_result<T>(std::move(shape), std::move(v), detail::parents_of<T>({&a}), [](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// Identity forward; multiplies the incoming gradient by -lambda on the way back.
template <class T>
BasicTensor<T> grl(const BasicTensor<T>& a, T lambda) {
  std::vector<T> v(a.values().begin(), a.values().end());
  return make_result<T>(a.shape(), std::move(v), detail::parents_of<T>({&a}), [lambda](Node<T>& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += -lambda * self.grad[i];
  });
}

// x [B, Cin, H, W], w [Cout, K] -> [B, Cout, H, W]; Cout must be a multiple of Cin.
template <class T>
BasicTensor<T> temporal_conv(const BasicTensor<T>& x, const BasicTensor<T>& w) {
  detail::require(x.rank() == 4 && w.rank() == 2, "temporal_conv: expects x rank 4, w rank 2");
  const kernels::TemporalConvShape s{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(1)};
  detail::require(s.out_channels % s.in_channels == 0, "temporal_conv: out channels not a multiple of in");
  std::vector<T> y(s.batch * s.out_channels * s.rows * s.width);
  kernels::temporal_conv_forward(s, x.data(), w.data(), y.data());
  return make_result<T>({s.batch, s.out_channels, s.rows, s.width}, std::move(y),
                        detail::parents_of<T>({&x, &w}), [s](Node<T>& self) {
                          auto& px = *self.parents[0];
                          auto& pw = *self.parents[1];
                          kernels::temporal_conv_backward(
                              s, px.value.data(), pw.value.data(), self.grad.data(),
                              px.requires_grad ? px.ensure_grad().data() : nullptr,
                              pw.requires_grad ? pw.ensure_grad().data() : nullptr);
                        });
}

// x [B, G, H, W], w [G * D, H] -> [B, G * D, 1, W]
template <class T>
BasicTensor<T> spatial_conv(const BasicTensor<T>& x, const BasicTensor<T>& w) {
  detail::require(x.rank() == 4 && w.rank() == 2, "spatial_conv: expects x rank 4, w rank 2");
  detail::require(w.dim(1) == x.dim(2), "spatial_conv: kernel height must equal input rows");
  detail::require(w.dim(0) % x.dim(1) == 0, "spatial_conv: out channels not a multiple of groups");
  const kernels::SpatialConvShape s{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0) / x.dim(1)};
  std::vector<T> y(s.batch * s.out_channels() * s.width);
  kernels::spatial_conv_forward(s, x.data(), w.data(), y.data());
  return make_result<T>({s.batch, s.out_channels(), 1, s.width}, std::move(y),
                        detail::parents_of<T>({&x, &w}), [s](Node<T>& self) {
                          auto& px = *self.parents[0];
                          auto& pw = *self.parents[1];
                          kernels::spatial_conv_backward(
                              s, px.value.data(), pw.value.data(), self.grad.data(),
                              px.requires_grad ? px.ensure_grad().data() : nullptr,
                              pw.requires_grad ? pw.ensure_grad().data() : nullptr);
                        });
}

// x [B, G, 1, W], w [O, G] -> [B, O, 1, W]
template <class T>
BasicTensor<T> pointwise_conv(const BasicTensor<T>& x, const BasicTensor<T>& w) {
  detail::require(x.rank() == 4 && x.dim(2) == 1 && w.rank() == 2 && w.dim(1) == x.dim(1),
                  "pointwise_conv: shape mismatch");
  const kernels::PointwiseConvShape s{x.dim(0), x.dim(1), x.dim(3), w.dim(0)};
  std::vector<T> y(s.batch * s.out_channels * s.width);
  kernels::pointwise_conv_forward(s, x.data(), w.data(), y.data());
  return make_result<T>({s.batch, s.out_channels, 1, s.width}, std::move(y),
                        detail::parents_of<T>({&x, &w}), [s](Node<T>& self) {
                          auto& px = *self.parents[0];
                          auto& pw = *self.parents[1];
                          kernels::pointwise_conv_backward(
                              s, px.value.data(), pw.value.data(), self.grad.data(),
                              px.requires_grad ? px.ensure_grad().data() : nullptr,
                              pw.requires_grad ? pw.ensure_grad().data() : nullptr);
                        });
}

// Depthwise temporal conv followed by a pointwise mix.
template <class T>
BasicTensor<T> separable_conv(const BasicTensor<T>& x, const BasicTensor<T>& depthwise,
                              const BasicTensor<T>& pointwise) {
  return pointwise_conv(temporal_conv(x, depthwise), pointwise);
}

template <class T>
struct BatchNormBuffers {
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;
};

// Per-channel normalization of x [B, Ch, H, W]. Train mode uses biased batch
// statistics and folds the unbiased variance into the running buffers.
template <class T>
BasicTensor<T> batch_norm(const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                          const BasicTensor<T>& beta, BatchNormBuffers<T>& buffers, bool train,
                          T momentum = T(0.1), T eps = T(1e-5)) {
  detail::require(x.rank() == 4 && gamma.numel() == x.dim(1) && beta.numel() == x.dim(1),
                  "batch_norm: shape mismatch");
  const std::size_t B = x.dim(0), C = x.dim(1), inner = x.dim(2) * x.dim(3);
  const std::size_t count = B * inner;
  std::vector<T> mean(C), inv_std(C);
  const auto xv = x.values();
  if (train) {
    detail::require(count > 1, "batch_norm: train mode needs more than one value per channel");
    for (std::size_t c = 0; c < C; ++c) {
      T m = 0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < inner; ++i) m += xv[(b * C + c) * inner + i];
      m /= static_cast<T>(count);
      T var = 0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < inner; ++i) {
          const T d = xv[(b * C + c) * inner + i] - m;
          var += d * d;
        }
      var /= static_cast<T>(count);
      mean[c] = m;
      inv_std[c] = T(1) / std::sqrt(var + eps);
      auto rm = buffers.running_mean.values();
      auto rv = buffers.running_var.values();
      rm[c] = (T(1) - momentum) * rm[c] + momentum * m;
      rv[c] = (T(1) - momentum) * rv[c] +
              momentum * var * static_cast<T>(count) / static_cast<T>(count - 1);
    }
  } else {
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = buffers.running_mean.values()[c];
      inv_std[c] = T(1) / std::sqrt(buffers.running_var.values()[c] + eps);
    }
  }
  std::vector<T> xhat(x.numel()), y(x.numel());
  const auto g = gamma.values();
  const auto bt = beta.values();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = (b * C + c) * inner + i;
        xhat[k] = (xv[k] - mean[c]) * inv_std[c];
        y[k] = g[c] * xhat[k] + bt[c];
      }
  return make_result<T>(
      x.shape(), std::move(y), detail::parents_of<T>({&x, &gamma, &beta}),
      [xhat = std::move(xhat), inv_std = std::move(inv_std), B, C, inner, count, train](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const auto& dy = self.grad;
        for (std::size_t c = 0; c < C; ++c) {
          T sum_dy = 0, sum_dy_xhat = 0;
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t k = (b * C + c) * inner + i;
              sum_dy += dy[k];
              sum_dy_xhat += dy[k] * xhat[k];
            }
          if (pg.requires_grad) pg.ensure_grad()[c] += sum_dy_xhat;
          if (pb.requires_grad) pb.ensure_grad()[c] += sum_dy;
          if (!px.requires_grad) continue;
          auto& dx = px.ensure_grad();
          const T gc = pg.value[c];
          const T n = static_cast<T>(count);
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t k = (b * C + c) * inner + i;
              if (train) {
                dx[k] += gc * inv_std[c] * (dy[k] - sum_dy / n - xhat[k] * sum_dy_xhat / n);
              } else {
                dx[k] += gc * inv_std[c] * dy[k];
              }
            }
        }
      });
}

template <class T>
BasicTensor<T> elu(const BasicTensor<T>& x, T alpha = T(1)) {
  std::vector<T> y(x.numel());
  const auto xv = x.values();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > 0 ? xv[i] : alpha * std::expm1(xv[i]);
  return make_result<T>(x.shape(), std::move(y), detail::parents_of<T>({&x}), [alpha](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& g = px.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = px.value[i];
      g[i] += self.grad[i] * (v > 0 ? T(1) : alpha * std::exp(v));
    }
  });
}

// Average over non-overlapping width windows of size p; trailing columns dropped.
template <class T>
BasicTensor<T> avg_pool_width(const BasicTensor<T>& x, std::size_t p) {
  detail::require(x.rank() == 4 && p >= 1 && x.dim(3) >= p, "avg_pool_width: bad shape or pool size");
  const std::size_t rows = x.dim(0) * x.dim(1) * x.dim(2), W = x.dim(3), Wo = W / p;
  std::vector<T> y(rows * Wo);
  const auto xv = x.values();
  const T inv = T(1) / static_cast<T>(p);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t t = 0; t < Wo; ++t) {
      T acc = 0;
      for (std::size_t k = 0; k < p; ++k) acc += xv[r * W + t * p + k];
      y[r * Wo + t] = acc * inv;
    }
  return make_result<T>({x.dim(0), x.dim(1), x.dim(2), Wo}, std::move(y), detail::parents_of<T>({&x}),
                        [rows, W, Wo, p, inv](Node<T>& self) {
                          auto& g = self.parents[0]->ensure_grad();
                          for (std::size_t r = 0; r < rows; ++r)
                            for (std::size_t t = 0; t < Wo; ++t)
                              for (std::size_t k = 0; k < p; ++k)
                                g[r * W + t * p + k] += self.grad[r * Wo + t] * inv;
                        });
}

// Inverted dropout: kept units are scaled by 1 / (1 - p). Identity when !train.
template <class T>
BasicTensor<T> dropout(const BasicTensor<T>& x, double p, Rng& rng, bool train) {
  if (!train || p <= 0.0) return x;
  std::vector<T> mask(x.numel());
  const T keep_scale = T(1) / static_cast<T>(1.0 - p);
  for (auto& m : mask) m = rng.uniform() >= p ? keep_scale : T(0);
  std::vector<T> y(x.numel());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.values()[i] * mask[i];
  return make_result<T>(x.shape(), std::move(y), detail::parents_of<T>({&x}),
                        [mask = std::move(mask)](Node<T>& self) {
                          auto& g = self.parents[0]->ensure_grad();
                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
                        });
}

// x [B, in], w [out, in], b [out] -> [B, out]
template <class T>
BasicTensor<T> linear(const BasicTensor<T>& x, const BasicTensor<T>& w, const BasicTensor<T>& b) {
  detail::require(x.rank() == 2 && w.rank() == 2 && w.dim(1) == x.dim(1) && b.numel() == w.dim(0),
                  "linear: shape mismatch " + shape_string(x.shape()) + " x " + shape_string(w.shape()));
  const std::size_t B = x.dim(0), in = x.dim(1), out = w.dim(0);
  std::vector<T> y(B * out);
  const auto xv = x.values();
  const auto wv = w.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t o = 0; o < out; ++o) {
      T acc = bv[o];
      for (std::size_t k = 0; k < in; ++k) acc += wv[o * in + k] * xv[i * in + k];
      y[i * out + o] = acc;
    }
  return make_result<T>({B, out}, std::move(y), detail::parents_of<T>({&x, &w, &b}),
                        [B, in, out](Node<T>& self) {
                          auto& px = *self.parents[0];
                          auto& pw = *self.parents[1];
                          auto& pb = *self.parents[2];
                          const auto& dy = self.grad;
                          if (px.requires_grad) {
                            auto& dx = px.ensure_grad();
                            for (std::size_t i = 0; i < B; ++i)
                              for (std::size_t o = 0; o < out; ++o) {
                                const T g = dy[i * out + o];
                                for (std::size_t k = 0; k < in; ++k) dx[i * in + k] += g * pw.value[o * in + k];
                              }
                          }
                          if (pw.requires_grad) {
                            auto& dw = pw.ensure_grad();
                            for (std::size_t o = 0; o < out; ++o)
                              for (std::size_t i = 0; i < B; ++i) {
                                const T g = dy[i * out + o];
                                for (std::size_t k = 0; k < in; ++k) dw[o * in + k] += g * px.value[i * in + k];
                              }
                          }
                          if (pb.requires_grad) {
                            auto& db = pb.ensure_grad();
                            for (std::size_t i = 0; i < B; ++i)
                              for (std::size_t o = 0; o < out; ++o) db[o] += dy[i * out + o];
                          }
                        });
}

// Row-wise log-softmax of a [B, K] array (no graph).
template <class T>
std::vector<T> log_softmax_rows(std::span<const T> logits, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* l = logits.data() + r * cols;
    const T mx = *std::max_element(l, l + cols);
    T s = 0;
    for (std::size_t k = 0; k < cols; ++k) s += std::exp(l[k] - mx);
    const T lse = mx + std::log(s);
    for (std::size_t k = 0; k < cols; ++k) out[r * cols + k] = l[k] - lse;
  }
  return out;
}

// Mean softmax cross-entropy of logits [B, K] against integer targets.
template <class T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const int> targets) {
  detail::require(logits.rank() == 2 && logits.dim(0) == targets.size() && !targets.empty(),
                  "cross_entropy: logits/targets mismatch");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  auto logp = log_softmax_rows<T>(logits.values(), B, K);
  std::vector<int> tgt(targets.begin(), targets.end());
  T loss = 0;
  for (std::size_t i = 0; i < B; ++i) {
    detail::require(tgt[i] >= 0 && static_cast<std::size_t>(tgt[i]) < K, "cross_entropy: target out of range");
    loss -= logp[i * K + static_cast<std::size_t>(tgt[i])];
  }
  loss /= static_cast<T>(B);
  return make_result<T>({1}, {loss}, detail::parents_of<T>({&logits}),
                        [logp = std::move(logp), tgt = std::move(tgt), B, K](Node<T>& self) {
                          auto& g = self.parents[0]->ensure_grad();
                          const T scale = self.grad[0] / static_cast<T>(B);
                          for (std::size_t i = 0; i < B; ++i)
                            for (std::size_t k = 0; k < K; ++k) {
                              const T p = std::exp(logp[i * K + k]);
                              g[i * K + k] += scale * (p - (static_cast<int>(k) == tgt[i] ? T(1) : T(0)));
                            }
                        });
}

// Mean Shannon entropy (natural log) of the row softmax of logits [B, K].
template <class T>
BasicTensor<T> softmax_entropy(const BasicTensor<T>& logits) {
  detail::require(logits.rank() == 2 && logits.dim(0) > 0, "softmax_entropy: expects [B, K]");
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  auto logp = log_softmax_rows<T>(logits.values(), B, K);
  std::vector<T> h(B, T(0));
  T total = 0;
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t k = 0; k < K; ++k) h[i] -= std::exp(logp[i * K + k]) * logp[i * K + k];
    total += h[i];
  }
  total /= static_cast<T>(B);
  return make_result<T>({1}, {total}, detail::parents_of<T>({&logits}),
                        [logp = std::move(logp), h = std::move(h), B, K](Node<T>& self) {
                          // dH/dl_j = -p_j (log p_j + H)
                          auto& g = self.parents[0]->ensure_grad();
                          const T scale = self.grad[0] / static_cast<T>(B);
                          for (std::size_t i = 0; i < B; ++i)
                            for (std::size_t k = 0; k < K; ++k) {
                              const T lp = logp[i * K + k];
                              g[i * K + k] -= scale * std::exp(lp) * (lp + h[i]);
                            }
                        });
}

}  // namespace saf::nn
