#include <doctest.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <map>

#include "saf/model.hpp"
#include "test_util.hpp"

using namespace saf;
using namespace saf::nn;

namespace {

Tensor64 rand64(Shape shape, Rng& rng, bool grad = true, double scale = 1.0) {
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = scale * rng.normal();
  return Tensor64::from(std::move(shape), std::move(v), grad);
}

// Relative error of the analytic gradient of f() w.r.t. each leaf against
// central differences, measured as ||a - n|| / ||n|| per tensor.
void check_gradients(const std::function<Tensor64()>& f, std::vector<Tensor64> leaves, double h = 1e-4,
                     double tol = 1e-3) {
  for (auto& t : leaves) t.zero_grad();
  backward(f());
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& t = leaves[li];
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    double err = 0.0, ref = 0.0;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double keep = t.values()[i];
      t.values()[i] = keep + h;
      const double up = f().item();
      t.values()[i] = keep - h;
      const double down = f().item();
      t.values()[i] = keep;
      const double numeric = (up - down) / (2 * h);
      err += (analytic[i] - numeric) * (analytic[i] - numeric);
      ref += numeric * numeric;
    }
    INFO("leaf " << li);
    CHECK(std::sqrt(err) <= tol * std::max(std::sqrt(ref), 1e-8));
  }
}

EncoderConfig small_cfg() { return EncoderConfig::for_data(4, 64, 32.0); }

}  // namespace

TEST_CASE("feature_dim arithmetic") {
  auto a = EncoderConfig::for_data(15, 3072, 512.0);
  CHECK(a.temporal_kernel == 256);
  CHECK(a.feature_dim() == 1536);
  CHECK(small_cfg().feature_dim() == 32);
  CHECK(small_cfg().temporal_kernel == 16);
  auto bad = EncoderConfig::for_data(4, 16, 32.0);
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("primitive gradients match central differences") {
  Rng rng(1);
  SUBCASE("temporal conv") {
    auto x = rand64({2, 2, 3, 11}, rng), w = rand64({4, 5}, rng);
    check_gradients([&] { return sum(mul(temporal_conv(x, w), temporal_conv(x, w))); }, {x, w});
  }
  SUBCASE("depthwise spatial conv") {
    auto x = rand64({2, 3, 4, 6}, rng), w = rand64({6, 4}, rng);
    auto probe = rand64({2, 6, 1, 6}, rng, false);
    check_gradients([&] { return sum(mul(spatial_conv(x, w), probe)); }, {x, w});
  }
  SUBCASE("separable conv") {
    auto x = rand64({2, 4, 1, 9}, rng), dw = rand64({4, 3}, rng), pw = rand64({5, 4}, rng);
    auto probe = rand64({2, 5, 1, 9}, rng, false);
    check_gradients([&] { auto y = separable_conv(x, dw, pw); return sum(mul(mul(y, y), probe)); }, {x, dw, pw});
  }
  SUBCASE("batch norm, train and eval") {
    auto x = rand64({3, 2, 1, 5}, rng), g = rand64({2}, rng), b = rand64({2}, rng);
    auto probe = rand64({3, 2, 1, 5}, rng, false);
    for (bool train : {true, false}) {
      BatchNormBuffers<double> buf{Tensor64::from({2}, {0.1, -0.2}), Tensor64::from({2}, {1.5, 0.7})};
      check_gradients([&] { return sum(mul(batch_norm(x, g, b, buf, train), probe)); }, {x, g, b});
    }
  }
  SUBCASE("elu away from the kink") {
    auto x = rand64({20}, rng);
    for (auto& v : x.values()) v += v > 0 ? 0.05 : -0.05;
    auto probe = rand64({20}, rng, false);
    check_gradients([&] { return sum(mul(elu(x), probe)); }, {x});
  }
  SUBCASE("avg pool") {
    auto x = rand64({2, 2, 1, 11}, rng);
    auto probe = rand64({2, 2, 1, 3}, rng, false);
    check_gradients([&] { return sum(mul(avg_pool_width(x, 3), probe)); }, {x});
  }
  SUBCASE("linear") {
    auto x = rand64({3, 4}, rng), w = rand64({5, 4}, rng), b = rand64({5}, rng);
    auto probe = rand64({3, 5}, rng, false);
    check_gradients([&] { return sum(mul(linear(x, w, b), probe)); }, {x, w, b});
  }
  SUBCASE("softmax cross-entropy") {
    auto l = rand64({4, 3}, rng);
    const std::vector<int> t{0, 2, 1, 2};
    check_gradients([&] { return cross_entropy(l, t); }, {l});
  }
  SUBCASE("softmax entropy") {
    auto l = rand64({4, 5}, rng);
    check_gradients([&] { return softmax_entropy(l); }, {l});
  }
}

TEST_CASE("backward basics") {
  auto w = Tensor64::from({3}, {1.0, 2.0, 3.0}, true);
  auto x = Tensor64::from({3}, {0.5, -4.0, 7.0});
  backward(sum(mul(w, x)));
  CHECK(std::vector<double>(w.grad().begin(), w.grad().end()) == std::vector<double>{0.5, -4.0, 7.0});
  backward(sum(mul(w, x)));
  CHECK(std::vector<double>(w.grad().begin(), w.grad().end()) == std::vector<double>{1.0, -8.0, 14.0});
  CHECK_THROWS_AS(backward(mul(w, x)), ValidationError);
}

TEST_CASE("gradient reversal") {
  Rng rng(2);
  auto z = rand64({2, 3}, rng);
  auto g = rand64({2, 3}, rng, false);
  const auto y = grl(z, 1.25);
  CHECK(std::vector<double>(y.values().begin(), y.values().end()) ==
        std::vector<double>(z.values().begin(), z.values().end()));
  backward(sum(mul(y, g)));
  for (std::size_t i = 0; i < 6; ++i) CHECK(z.grad()[i] == -1.25 * g.values()[i]);
  z.zero_grad();
  backward(sum(mul(grl(z, 0.0), g)));
  for (std::size_t i = 0; i < 6; ++i) CHECK(z.grad()[i] == 0.0);
}

TEST_CASE("domain loss reaches the encoder with flipped sign through grl") {
  SafModel64 model(small_cfg(), 3, 1.0, 5);
  Rng rng(3);
  const auto x = rand64({4, 1, 4, 64}, rng, false);
  const std::vector<int> s{0, 1, 2, 1};
  auto enc_grads = [&](bool through_grl) {
    model.zero_grad();
    Rng d(0);
    auto z = model.encode(x, Mode::kEval, d);
    auto logits = through_grl ? model.heads(z).domain_logits : model.domain_head(z);
    backward(cross_entropy(logits, s));
    std::vector<double> out;
    for (auto& p : model.encoder_parameters())
      for (double v : p.tensor.grad()) out.push_back(v);
    return out;
  };
  const auto with = enc_grads(true), without = enc_grads(false);
  double norm = 0.0;
  for (std::size_t i = 0; i < with.size(); ++i) {
    CHECK(with[i] == doctest::Approx(-without[i]).epsilon(1e-12));
    norm += with[i] * with[i];
  }
  CHECK(norm > 0.0);

  SUBCASE("task-branch gradients do not depend on lambda") {
    auto task_grads = [&](double lambda) {
      model.set_grl_lambda(lambda);
      model.zero_grad();
      Rng d(0);
      auto z = model.encode(x, Mode::kEval, d);
      backward(cross_entropy(model.heads(z).task_logits, std::vector<int>{0, 1, 1, 0}));
      std::vector<double> out;
      for (auto& p : model.encoder_parameters())
        for (double v : p.tensor.grad()) out.push_back(v);
      return out;
    };
    CHECK(task_grads(0.1) == task_grads(7.0));
  }
}

TEST_CASE("full model gradients match central differences on the 64-bit shadow") {
  const SafModel float_model(small_cfg(), 3, 0.7, 11);
  auto model = float_model.cast<double>();
  Rng rng(4);
  const auto x = rand64({3, 1, 4, 64}, rng, false);
  const std::vector<int> y{0, 1, 1}, s{2, 0, 1};
  auto loss = [&] {
    Rng d(42);  // same dropout masks on every evaluation
    auto z = model.encode(x, Mode::kTrain, d);
    // Bypass grl: finite differences only see the forward pass.
    const auto d_logits = model.domain_head(z);
    return add(add(cross_entropy(model.heads(z).task_logits, y), cross_entropy(d_logits, s)),
               scale(softmax_entropy(d_logits), 0.3));
  };
  std::vector<Tensor64> leaves;
  for (auto& p : model.parameters()) leaves.push_back(p.tensor);
  check_gradients(loss, leaves, 1e-3, 1e-3);
}

TEST_CASE("heads shapes and zero weights") {
  SafModel model(small_cfg(), 5, 1.0, 0);
  for (auto& p : model.parameters())
    for (auto& v : p.tensor.values()) v = 0.0f;
  Rng rng(0);
  auto z = Tensor::zeros({7, model.config().feature_dim()});
  for (auto& v : z.values()) v = static_cast<float>(rng.normal());
  const auto h = model.heads(z);
  CHECK(h.task_logits.shape() == Shape{7, 2});
  CHECK(h.domain_logits.shape() == Shape{7, 5});
  for (float v : h.task_logits.values()) CHECK(v == 0.0f);
  for (float v : h.domain_logits.values()) CHECK(v == 0.0f);
  CHECK_THROWS_AS(model.heads(Tensor::zeros({2, 3})), ValidationError);
  CHECK_THROWS_AS(model.encode(Tensor::zeros({2, 1, 3, 64}), Mode::kEval, rng), ValidationError);
}

TEST_CASE("eval mode is deterministic and batch-size invariant") {
  SafModel model(small_cfg(), 2, 1.0, 9);
  // Non-trivial running statistics.
  Rng rng(5);
  auto xb = Tensor::zeros({6, 1, 4, 64});
  for (auto& v : xb.values()) v = static_cast<float>(rng.normal());
  for (int i = 0; i < 3; ++i) model.encode(xb, Mode::kTrain, rng);
  Rng d(0);
  const auto batched = model.task_head(model.encode(xb, Mode::kEval, d));
  const auto again = model.task_head(model.encode(xb, Mode::kEval, d));
  CHECK(std::vector<float>(batched.values().begin(), batched.values().end()) ==
        std::vector<float>(again.values().begin(), again.values().end()));
  for (std::size_t b = 0; b < 6; ++b) {
    auto one = Tensor::zeros({1, 1, 4, 64});
    std::copy_n(xb.values().begin() + static_cast<std::ptrdiff_t>(b * 256), 256, one.values().begin());
    const auto l = model.task_head(model.encode(one, Mode::kEval, d));
    for (std::size_t k = 0; k < 2; ++k) CHECK(std::abs(l.values()[k] - batched.values()[b * 2 + k]) <= 1e-5f);
  }
}

TEST_CASE("dropout preserves the expectation") {
  auto x = Tensor64::from({16}, std::vector<double>(16, 0.0));
  for (std::size_t i = 0; i < 16; ++i) x.values()[i] = 1.0 + 0.1 * static_cast<double>(i);
  double eval_mean = 0.0;
  for (double v : x.values()) eval_mean += v;
  eval_mean /= 16.0;
  Rng rng(6);
  double acc = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const auto y = dropout(x, 0.25, rng, true);
    for (double v : y.values()) acc += v;
  }
  const double train_mean = acc / (10000.0 * 16.0);
  CHECK(std::abs(train_mean - eval_mean) <= 0.02 * eval_mean);
  const auto e = dropout(x, 0.25, rng, false);
  CHECK(e.node_ptr() == x.node_ptr());
}

TEST_CASE("initialization follows the Glorot bounds") {
  const SafModel model(EncoderConfig::for_data(8, 256, 128.0), 4, 1.0, 123);
  const auto& c = model.config();
  auto limit = [](double fin, double fout) { return std::sqrt(6.0 / (fin + fout)); };
  const std::map<std::string, double> bounds{
      {"temporal.weight", limit(c.temporal_kernel, c.f1 * c.temporal_kernel)},
      {"spatial.weight", limit(c.channels, c.depth * c.channels)},
      {"separable.depthwise", limit(c.separable_kernel, c.separable_kernel)},
      {"separable.pointwise", limit(c.f1 * c.depth, c.f2)},
      {"task.weight", limit(c.feature_dim(), 2)},
      {"domain1.weight", limit(c.feature_dim(), kDomainHidden)},
      {"domain2.weight", limit(kDomainHidden, 4)}};
  for (const auto& p : model.parameters()) {
    INFO(p.name);
    const auto v = p.tensor.values();
    if (auto it = bounds.find(p.name); it != bounds.end()) {
      double sq = 0.0;
      for (float w : v) {
        CHECK(std::abs(w) <= it->second);
        sq += double(w) * w;
      }
      if (v.size() >= 1000) CHECK(sq / v.size() == doctest::Approx(it->second * it->second / 3).epsilon(0.1));
    } else if (p.name.ends_with(".bias")) {
      for (float w : v) CHECK(w == 0.0f);
    } else {
      for (float w : v) CHECK(w == 1.0f);  // batch-norm scale
    }
  }
  const SafModel same(EncoderConfig::for_data(8, 256, 128.0), 4, 1.0, 123);
  const SafModel other(EncoderConfig::for_data(8, 256, 128.0), 4, 1.0, 124);
  const auto a = model.parameters()[0].tensor.values();
  CHECK(std::equal(a.begin(), a.end(), same.parameters()[0].tensor.values().begin()));
  CHECK_FALSE(std::equal(a.begin(), a.end(), other.parameters()[0].tensor.values().begin()));
}

TEST_CASE("clone and cast do not share storage") {
  SafModel model(small_cfg(), 2, 1.0, 1);
  auto copy = model.clone();
  copy.parameters()[0].tensor.values()[0] += 1.0f;
  CHECK(copy.parameters()[0].tensor.values()[0] != model.parameters()[0].tensor.values()[0]);
  copy.load_values_from(model);
  CHECK(copy.parameters()[0].tensor.values()[0] == model.parameters()[0].tensor.values()[0]);
}

TEST_CASE("checkpoint round trip") {
  const auto dir = testutil::temp_dir("nn_ckpt");
  SafModel model(small_cfg(), 3, 0.625, 7);
  Rng rng(1);
  auto x = Tensor::zeros({5, 1, 4, 64});
  for (auto& v : x.values()) v = static_cast<float>(rng.normal());
  model.encode(x, Mode::kTrain, rng);  // move the running statistics
  save_checkpoint(model, dir / "m.safm");
  auto back = load_checkpoint(dir / "m.safm");
  CHECK(back.num_domains() == 3);
  CHECK(back.grl_lambda() == 0.625);
  CHECK(back.config().temporal_kernel == 16);
  const auto sa = model.state(), sb = back.state();
  REQUIRE(sa.size() == sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].name == sb[i].name);
    const auto va = sa[i].tensor.values(), vb = sb[i].tensor.values();
    CHECK(std::equal(va.begin(), va.end(), vb.begin(), vb.end()));
  }
  {
    std::ifstream in(dir / "m.safm", std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SAFM");
    bytes.push_back('\0');
    std::ofstream(dir / "trail.safm", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    bytes.resize(bytes.size() - 20);
    std::ofstream(dir / "short.safm", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "trail.safm"), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir / "short.safm"), FormatError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.safm"), IoError);
}
