#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "saf/ops.hpp"
#include "saf/random.hpp"

namespace saf::nn {

struct EncoderConfig {
  std::size_t channels = 0;
  std::size_t samples = 0;
  double sample_rate_hz = 0.0;
  std::size_t f1 = 8;
  std::size_t depth = 2;
  std::size_t f2 = 16;
  std::size_t temporal_kernel = 0;  // round(fs / 2) unless set
  std::size_t separable_kernel = 16;
  double dropout = 0.25;
  std::size_t pool1 = 4;
  std::size_t pool2 = 8;

  static EncoderConfig for_data(std::size_t channels, std::size_t samples, double sample_rate_hz);

  std::size_t feature_dim() const { return f2 * ((samples / pool1) / pool2); }
  void validate() const;
};

enum class Mode { kTrain, kEval };

template <class T>
struct HeadOutputs {
  BasicTensor<T> task_logits;    // [B, 2]
  BasicTensor<T> domain_logits;  // [B, K], computed through the reversal layer
};

template <class T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
};

inline constexpr std::size_t kDomainHidden = 64;

// Encoder f_theta (two EEGNet blocks), task head g_phi (linear d -> 2) and
// domain head h_psi (linear d -> 64, ELU, linear 64 -> K).
template <class T>
class BasicSafModel {
 public:
  BasicSafModel() = default;
  BasicSafModel(const EncoderConfig& cfg, std::size_t num_domains, double grl_lambda,
                std::uint64_t seed);

  const EncoderConfig& config() const { return cfg_; }
  std::size_t num_domains() const { return num_domains_; }
  double grl_lambda() const { return grl_lambda_; }
  void set_grl_lambda(double v) { grl_lambda_ = v; }

  // x [B, 1, C, M] -> z [B, d]
  BasicTensor<T> encode(const BasicTensor<T>& x, Mode mode, Rng& rng);
  BasicTensor<T> task_head(const BasicTensor<T>& z) const;
  BasicTensor<T> domain_head(const BasicTensor<T>& z) const;
  HeadOutputs<T> heads(const BasicTensor<T>& z) const;

  // Trainable tensors grouped by owner: encoder, task head, domain head.
  std::vector<NamedTensor<T>> encoder_parameters() const;
  std::vector<NamedTensor<T>> task_parameters() const;
  std::vector<NamedTensor<T>> domain_parameters() const;
  std::vector<NamedTensor<T>> parameters() const;
  // Batch-norm running statistics.
  std::vector<NamedTensor<T>> buffers() const;
  // parameters() followed by buffers(); the checkpoint order.
  std::vector<NamedTensor<T>> state() const;

  void zero_grad();

  // Deep copy (no shared storage).
  BasicSafModel clone() const { return cast<T>(); }

  template <class U>
  BasicSafModel<U> cast() const {
    BasicSafModel<U> out;
    out.cfg_ = cfg_;
    out.num_domains_ = num_domains_;
    out.grl_lambda_ = grl_lambda_;
    auto src = state();
    auto dst = out.mutable_state();
    for (std::size_t i = 0; i < src.size(); ++i) {
      const auto v = src[i].tensor.values();
      *dst[i] = BasicTensor<U>::from(src[i].tensor.shape(), std::vector<U>(v.begin(), v.end()),
                                     src[i].tensor.requires_grad());
    }
    return out;
  }

  // Copies values (not storage) from another model of identical architecture.
  void load_values_from(const BasicSafModel& other);

 private:
  template <class U>
  friend class BasicSafModel;

  std::vector<BasicTensor<T>*> mutable_state();

  EncoderConfig cfg_{};
  std::size_t num_domains_ = 0;
  double grl_lambda_ = 0.0;

  BasicTensor<T> temporal_w_, bn1_gamma_, bn1_beta_;
  BasicTensor<T> spatial_w_, bn2_gamma_, bn2_beta_;
  BasicTensor<T> sep_depth_w_, sep_point_w_, bn3_gamma_, bn3_beta_;
  BasicTensor<T> task_w_, task_b_;
  BasicTensor<T> dom1_w_, dom1_b_, dom2_w_, dom2_b_;
  BatchNormBuffers<T> bn1_, bn2_, bn3_;
};

using SafModel = BasicSafModel<float>;
using SafModel64 = BasicSafModel<double>;

// "SAFM" | u32 version | encoder config | u32 K | f32 lambda_grl | u32 tensor count |
// per tensor: u32 name length, name, u32 rank, u32 dims..., f32 values (row-major).
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const SafModel& model, const std::filesystem::path& path);
SafModel load_checkpoint(const std::filesystem::path& path);

}  // namespace saf::nn
