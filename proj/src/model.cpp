#include "saf/model.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "saf/error.hpp"

namespace saf::nn {
namespace {

template <class T>
BasicTensor<T> glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<T> v(numel_of(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-limit, limit));
  return BasicTensor<T>::from(std::move(shape), std::move(v), true);
}

template <class T>
BasicTensor<T> filled(std::size_t n, T value, bool requires_grad) {
  return BasicTensor<T>::from({n}, std::vector<T>(n, value), requires_grad);
}

template <class T>
BatchNormBuffers<T> fresh_buffers(std::size_t n) {
  return {filled<T>(n, T(0), false), filled<T>(n, T(1), false)};
}

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  void u32(std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out_.write(reinterpret_cast<const char*>(b), 4);
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  explicit Reader(std::vector<unsigned char> buf) : buf_(std::move(buf)) {}
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw FormatError("truncated checkpoint");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const std::size_t n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == buf_.size(); }
  const std::vector<unsigned char>& bytes() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
};

}  // namespace

EncoderConfig EncoderConfig::for_data(std::size_t channels, std::size_t samples,
                                      double sample_rate_hz) {
  EncoderConfig cfg;
  cfg.channels = channels;
  cfg.samples = samples;
  cfg.sample_rate_hz = sample_rate_hz;
  cfg.temporal_kernel = static_cast<std::size_t>(std::llround(sample_rate_hz / 2.0));
  return cfg;
}

void EncoderConfig::validate() const {
  if (channels < 1 || samples < 1) throw ValidationError("encoder needs C >= 1 and M >= 1");
  if (temporal_kernel < 1) throw ValidationError("temporal kernel must be >= 1");
  if (f1 < 1 || depth < 1 || f2 < 1 || separable_kernel < 1 || pool1 < 1 || pool2 < 1) {
    throw ValidationError("encoder sizes must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ValidationError("dropout must be in [0, 1)");
  if (feature_dim() < 1) throw ValidationError("feature dimension is zero; epochs too short for pooling");
}

template <class T>
BasicSafModel<T>::BasicSafModel(const EncoderConfig& cfg, std::size_t num_domains,
                                double grl_lambda, std::uint64_t seed)
    : cfg_(cfg), num_domains_(num_domains), grl_lambda_(grl_lambda) {
  if (cfg_.temporal_kernel == 0) {
    cfg_.temporal_kernel = static_cast<std::size_t>(std::llround(cfg_.sample_rate_hz / 2.0));
  }
  cfg_.validate();
  if (num_domains_ < 1) throw ValidationError("domain head needs K >= 1");
  Rng rng(seed);
  const std::size_t g = cfg_.f1 * cfg_.depth;
  const std::size_t d = cfg_.feature_dim();
  const std::size_t kt = cfg_.temporal_kernel;
  const std::size_t ks = cfg_.separable_kernel;
  temporal_w_ = glorot<T>({cfg_.f1, kt}, kt, cfg_.f1 * kt, rng);
  spatial_w_ = glorot<T>({g, cfg_.channels}, cfg_.channels, cfg_.depth * cfg_.channels, rng);
  sep_depth_w_ = glorot<T>({g, ks}, ks, ks, rng);
  sep_point_w_ = glorot<T>({cfg_.f2, g}, g, cfg_.f2, rng);
  task_w_ = glorot<T>({2, d}, d, 2, rng);
  dom1_w_ = glorot<T>({kDomainHidden, d}, d, kDomainHidden, rng);
  dom2_w_ = glorot<T>({num_domains_, kDomainHidden}, kDomainHidden, num_domains_, rng);
  task_b_ = filled<T>(2, T(0), true);
  dom1_b_ = filled<T>(kDomainHidden, T(0), true);
  dom2_b_ = filled<T>(num_domains_, T(0), true);
  bn1_gamma_ = filled<T>(cfg_.f1, T(1), true);
  bn1_beta_ = filled<T>(cfg_.f1, T(0), true);
  bn2_gamma_ = filled<T>(g, T(1), true);
  bn2_beta_ = filled<T>(g, T(0), true);
  bn3_gamma_ = filled<T>(cfg_.f2, T(1), true);
  bn3_beta_ = filled<T>(cfg_.f2, T(0), true);
  bn1_ = fresh_buffers<T>(cfg_.f1);
  bn2_ = fresh_buffers<T>(g);
  bn3_ = fresh_buffers<T>(cfg_.f2);
}

template <class T>
BasicTensor<T> BasicSafModel<T>::encode(const BasicTensor<T>& x, Mode mode, Rng& rng) {
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != cfg_.channels || x.dim(3) != cfg_.samples) {
    throw ValidationError("encoder input must be [B, 1, " + std::to_string(cfg_.channels) + ", " +
                          std::to_string(cfg_.samples) + "], got " + shape_string(x.shape()));
  }
  const bool train = mode == Mode::kTrain;
  // Block 1: temporal filters, depthwise spatial filters.
  auto h = temporal_conv(x, temporal_w_);
  h = batch_norm(h, bn1_gamma_, bn1_beta_, bn1_, train);
  h = spatial_conv(h, spatial_w_);
  h = batch_norm(h, bn2_gamma_, bn2_beta_, bn2_, train);
  h = elu(h);
  h = avg_pool_width(h, cfg_.pool1);
  h = dropout(h, cfg_.dropout, rng, train);
  // Block 2: separable conv.
  h = separable_conv(h, sep_depth_w_, sep_point_w_);
  h = batch_norm(h, bn3_gamma_, bn3_beta_, bn3_, train);
  h = elu(h);
  h = avg_pool_width(h, cfg_.pool2);
  h = dropout(h, cfg_.dropout, rng, train);
  return reshape(h, {x.dim(0), cfg_.feature_dim()});
}

template <class T>
BasicTensor<T> BasicSafModel<T>::task_head(const BasicTensor<T>& z) const {
  return linear(z, task_w_, task_b_);
}

template <class T>
BasicTensor<T> BasicSafModel<T>::domain_head(const BasicTensor<T>& z) const {
  return linear(elu(linear(z, dom1_w_, dom1_b_)), dom2_w_, dom2_b_);
}

template <class T>
HeadOutputs<T> BasicSafModel<T>::heads(const BasicTensor<T>& z) const {
  if (z.rank() != 2 || z.dim(1) != cfg_.feature_dim()) {
    throw ValidationError("head input width must equal feature_dim");
  }
  return {task_head(z), domain_head(grl(z, static_cast<T>(grl_lambda_)))};
}

template <class T>
std::vector<NamedTensor<T>> BasicSafModel<T>::encoder_parameters() const {
  return {{"temporal.weight", temporal_w_}, {"bn1.weight", bn1_gamma_},
          {"bn1.bias", bn1_beta_},          {"spatial.weight", spatial_w_},
          {"bn2.weight", bn2_gamma_},       {"bn2.bias", bn2_beta_},
          {"separable.depthwise", sep_depth_w_}, {"separable.pointwise", sep_point_w_},
          {"bn3.weight", bn3_gamma_},       {"bn3.bias", bn3_beta_}};
}

template <class T>
std::vector<NamedTensor<T>> BasicSafModel<T>::task_parameters() const {
  return {{"task.weight", task_w_}, {"task.bias", task_b_}};
}

template <class T>
std::vector<NamedTensor<T>> BasicSafModel<T>::domain_parameters() const {
  return {{"domain1.weight", dom1_w_},
          {"domain1.bias", dom1_b_},
          {"domain2.weight", dom2_w_},
          {"domain2.bias", dom2_b_}};
}

template <class T>
std::vector<NamedTensor<T>> BasicSafModel<T>::parameters() const {
  auto out = encoder_parameters();
  for (auto& p : task_parameters()) out.push_back(std::move(p));
  for (auto& p : domain_parameters()) out.push_back(std::move(p));
  return out;
}

template <class T>
std::vector<NamedTensor<T>> BasicSafModel<T>::buffers() const {
  return {{"bn1.running_mean", bn1_.running_mean}, {"bn1.running_var", bn1_.running_var},
          {"bn2.running_mean", bn2_.running_mean}, {"bn2.running_var", bn2_.running_var},
          {"bn3.running_mean", bn3_.running_mean}, {"bn3.running_var", bn3_.running_var}};
}

template <class T>
std::vector<NamedTensor<T>> BasicSafModel<T>::state() const {
  auto out = parameters();
  for (auto& b : buffers()) out.push_back(std::move(b));
  return out;
}

template <class T>
std::vector<BasicTensor<T>*> BasicSafModel<T>::mutable_state() {
  return {&temporal_w_, &bn1_gamma_, &bn1_beta_, &spatial_w_, &bn2_gamma_, &bn2_beta_,
          &sep_depth_w_, &sep_point_w_, &bn3_gamma_, &bn3_beta_, &task_w_, &task_b_,
          &dom1_w_, &dom1_b_, &dom2_w_, &dom2_b_,
          &bn1_.running_mean, &bn1_.running_var, &bn2_.running_mean, &bn2_.running_var,
          &bn3_.running_mean, &bn3_.running_var};
}

template <class T>
void BasicSafModel<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

template <class T>
void BasicSafModel<T>::load_values_from(const BasicSafModel& other) {
  auto src = other.state();
  auto dst = state();
  if (src.size() != dst.size()) throw ValidationError("model architectures differ");
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i].tensor.shape() != dst[i].tensor.shape()) throw ValidationError("model architectures differ");
    auto s = src[i].tensor.values();
    std::copy(s.begin(), s.end(), dst[i].tensor.values().begin());
  }
}

template class BasicSafModel<float>;
template class BasicSafModel<double>;

void save_checkpoint(const SafModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  Writer w(out);
  out.write("SAFM", 4);
  w.u32(kCheckpointVersion);
  const auto& c = model.config();
  w.u32(static_cast<std::uint32_t>(c.channels));
  w.u32(static_cast<std::uint32_t>(c.samples));
  w.f32(static_cast<float>(c.sample_rate_hz));
  w.u32(static_cast<std::uint32_t>(c.f1));
  w.u32(static_cast<std::uint32_t>(c.depth));
  w.u32(static_cast<std::uint32_t>(c.f2));
  w.u32(static_cast<std::uint32_t>(c.temporal_kernel));
  w.u32(static_cast<std::uint32_t>(c.separable_kernel));
  w.f32(static_cast<float>(c.dropout));
  w.u32(static_cast<std::uint32_t>(c.pool1));
  w.u32(static_cast<std::uint32_t>(c.pool2));
  w.u32(static_cast<std::uint32_t>(model.num_domains()));
  w.f32(static_cast<float>(model.grl_lambda()));
  const auto tensors = model.state();
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.values()) w.f32(v);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

SafModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Reader r({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()});
  if (r.bytes().size() < 8 || std::memcmp(r.bytes().data(), "SAFM", 4) != 0) {
    throw FormatError("bad checkpoint magic in " + path.string());
  }
  r.u32();  // magic
  if (r.u32() != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
  EncoderConfig c;
  c.channels = r.u32();
  c.samples = r.u32();
  c.sample_rate_hz = r.f32();
  c.f1 = r.u32();
  c.depth = r.u32();
  c.f2 = r.u32();
  c.temporal_kernel = r.u32();
  c.separable_kernel = r.u32();
  c.dropout = r.f32();
  c.pool1 = r.u32();
  c.pool2 = r.u32();
  const std::size_t k = r.u32();
  const double lambda = r.f32();
  SafModel model(c, k, lambda, 0);
  auto tensors = model.state();
  if (r.u32() != tensors.size()) throw FormatError("checkpoint tensor count mismatch");
  for (auto& [name, t] : tensors) {
    if (r.str() != name) throw FormatError("checkpoint tensor order mismatch at " + name);
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u32();
    if (shape != t.shape()) throw FormatError("checkpoint shape mismatch for " + name);
    for (auto& v : t.values()) v = r.f32();
  }
  if (!r.done()) throw FormatError("trailing bytes in checkpoint");
  return model;
}

}  // namespace saf::nn
