#include "saf/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <iostream>
#include <numeric>

#include "saf/csv.hpp"
#include "saf/error.hpp"
#include "saf/metrics.hpp"

namespace saf::train {
namespace {

// Comparisons against improvement_eps carry a small slack so that decimal
// inputs such as 0.801 vs 0.800 count as "not more than 0.001".
constexpr double kSlack = 1e-12;

bool improves(double value, double best, double eps) { return value - best > eps + kSlack; }

}  // namespace

void LossWeights::validate() const {
  if (!(std::isfinite(lambda_mi) && lambda_mi >= 0.0)) throw ConfigError("lambda_mi must be finite and >= 0");
  if (!(std::isfinite(lambda_grl) && lambda_grl >= 0.0)) throw ConfigError("lambda_grl must be finite and >= 0");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (plateau_window < 1) throw ConfigError("plateau_window must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(improvement_eps >= 0.0)) throw ConfigError("improvement_eps must be >= 0");
  if (!(lr_factor > 0.0 && lr_factor < 1.0)) throw ConfigError("lr_factor must lie in (0, 1)");
  if (!(lr_floor >= 0.0)) throw ConfigError("lr_floor must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam eps must be positive");
  swap.validate();
}

double TrainLog::best_val() const {
  if (best_epoch == 0 || best_epoch > epochs.size()) return 0.0;
  return epochs[best_epoch - 1].val_macro_acc;
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,l_task,l_domain,l_mi,l_total,lr,val_macro_acc\n";
  for (const auto& e : epochs) {
    out << e.epoch << ',' << fmt6(e.l_task) << ',' << fmt6(e.l_domain) << ',' << fmt6(e.l_mi) << ','
        << fmt6(e.l_total) << ',' << fmt6(e.lr) << ',' << fmt6(e.val_macro_acc) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

template <class T>
Losses<T> compute_losses(BasicSafModel<T>& model, const BasicTensor<T>& x, std::span<const int> y,
                         std::span<const int> s, const LossWeights& weights, nn::Mode mode,
                         Rng& dropout_rng, MiRouting routing) {
  weights.validate();
  const auto k = static_cast<int>(model.num_domains());
  for (int v : s) {
    if (v < 0 || v >= k) {
      throw ValidationError("subject index " + std::to_string(v) + " out of range for K=" + std::to_string(k));
    }
  }
  model.set_grl_lambda(weights.lambda_grl);
  Losses<T> out;
  const auto z = model.encode(x, mode, dropout_rng);
  const auto heads = model.heads(z);
  out.task = nn::cross_entropy(heads.task_logits, y);
  out.domain = nn::cross_entropy(heads.domain_logits, s);
  if (routing == MiRouting::kReversed) {
    out.mi = nn::softmax_entropy(heads.domain_logits);
  } else {
    out.mi = nn::softmax_entropy(model.domain_head(z));
  }
  out.surrogate = nn::add(nn::add(out.task, nn::scale(out.mi, static_cast<T>(weights.lambda_mi))), out.domain);
  out.total = static_cast<double>(out.task.item()) + weights.lambda_mi * static_cast<double>(out.mi.item()) +
              weights.lambda_grl * static_cast<double>(out.domain.item());
  return out;
}

template Losses<float> compute_losses(BasicSafModel<float>&, const BasicTensor<float>&, std::span<const int>,
                                      std::span<const int>, const LossWeights&, nn::Mode, Rng&, MiRouting);
template Losses<double> compute_losses(BasicSafModel<double>&, const BasicTensor<double>&, std::span<const int>,
                                       std::span<const int>, const LossWeights&, nn::Mode, Rng&, MiRouting);

Adam::Adam(std::vector<nn::Tensor> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), 0.0f);
    v_.emplace_back(p.numel(), 0.0f);
  }
}

void Adam::step(double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    auto w = p.values();
    auto g = p.grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j];
      const double mj = beta1_ * m[j] + (1.0 - beta1_) * gj;
      const double vj = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double update = lr * (mj / bc1) / (std::sqrt(vj / bc2) + eps_);
      w[j] = static_cast<float>(static_cast<double>(w[j]) - update);
    }
  }
}

double scheduler_update(double metric, PlateauState& state, const TrainConfig& cfg) {
  if (improves(metric, state.best, cfg.improvement_eps)) {
    state.best = metric;
    state.stagnant = 0;
    return state.lr;
  }
  if (++state.stagnant >= cfg.plateau_window) {
    state.lr = std::max(state.lr * cfg.lr_factor, cfg.lr_floor);
    state.stagnant = 0;
  }
  return state.lr;
}

bool early_stop_check(std::span<const double> history, const TrainConfig& cfg) {
  if (history.size() < cfg.min_epochs) return false;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t stagnant = 0;
  for (double v : history) {
    if (improves(v, best, cfg.improvement_eps)) {
      best = v;
      stagnant = 0;
    } else {
      ++stagnant;
    }
  }
  return stagnant >= cfg.patience;
}

std::vector<float> stack_inputs(std::span<const Epoch* const> batch) {
  std::vector<float> out;
  if (batch.empty()) return out;
  const std::size_t n = batch.front()->x.size();
  out.reserve(batch.size() * n);
  for (const Epoch* e : batch) {
    if (e->x.size() != n) throw ValidationError("batch epochs differ in shape");
    out.insert(out.end(), e->x.begin(), e->x.end());
  }
  return out;
}

std::vector<int> predict(SafModel& model, std::span<const Epoch> epochs, std::size_t batch) {
  const auto& c = model.config();
  std::vector<int> out;
  out.reserve(epochs.size());
  Rng unused(0);
  for (std::size_t start = 0; start < epochs.size(); start += batch) {
    const std::size_t b = std::min(batch, epochs.size() - start);
    std::vector<const Epoch*> ptrs;
    for (std::size_t i = 0; i < b; ++i) ptrs.push_back(&epochs[start + i]);
    auto x = nn::Tensor::from({b, 1, c.channels, c.samples}, stack_inputs(ptrs));
    const auto logits = model.task_head(model.encode(x, nn::Mode::kEval, unused));
    const auto v = logits.values();
    for (std::size_t i = 0; i < b; ++i) out.push_back(v[2 * i + 1] > v[2 * i] ? 1 : 0);
  }
  return out;
}

double macro_accuracy_of(SafModel& model, std::span<const Epoch> epochs) {
  const auto pred = predict(model, epochs);
  std::vector<int> truth;
  truth.reserve(epochs.size());
  for (const auto& e : epochs) truth.push_back(e.y);
  return metrics::macro_metrics(metrics::confusion(truth, pred)).accuracy;
}

TrainLog fit(const EpochSet& train, const EpochSet& val, SafModel& model, const TrainConfig& cfg,
             const LossWeights& weights) {
  cfg.validate();
  weights.validate();
  if (train.empty() || val.empty()) throw ValidationError("fit needs non-empty train and val sets");
  const auto& mc = model.config();
  if (train.channels() != mc.channels || train.samples() != mc.samples || val.channels() != mc.channels ||
      val.samples() != mc.samples) {
    throw ValidationError("data shape does not match the model");
  }
  if (train.num_subjects() > model.num_domains()) {
    throw ValidationError("model has fewer domain outputs than training subjects");
  }
  if (train.num_subjects() < 2 && weights.lambda_grl > 0.0) {
    std::cerr << "warning: fewer than 2 training subjects; the domain adversary is degenerate\n";
  }

  Rng shuffle_rng(derive_seed(cfg.seed, 1));
  Rng swap_rng(derive_seed(cfg.seed, 2, cfg.swap.seed));
  Rng dropout_rng(derive_seed(cfg.seed, 3));

  std::vector<nn::Tensor> params;
  for (const auto& p : model.parameters()) params.push_back(p.tensor);
  Adam adam(params, cfg.beta1, cfg.beta2, cfg.adam_eps);

  PlateauState plateau;
  plateau.lr = cfg.lr;
  TrainLog log;
  std::vector<double> history;
  SafModel best = model.clone();
  double best_val = -1.0;

  const std::size_t C = mc.channels, M = mc.samples;
  std::vector<std::size_t> order(train.size());
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = plateau.lr;
    double seen = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t b = std::min(cfg.batch_size, order.size() - start);
      std::vector<const Epoch*> ptrs;
      std::vector<int> y, s;
      for (std::size_t i = 0; i < b; ++i) {
        const Epoch& e = train.epochs[order[start + i]];
        ptrs.push_back(&e);
        y.push_back(e.y);
        s.push_back(e.subject_index);
      }
      auto data = stack_inputs(ptrs);
      if (cfg.swap.p > 0.0) {
        std::vector<float> originals;
        if (cfg.swap.keep_originals) originals = data;
        isbcs_swap_inplace(data, C, M, y, cfg.swap.p, swap_rng);
        if (cfg.swap.keep_originals) {
          data.insert(data.end(), originals.begin(), originals.end());
          const std::vector<int> y0 = y, s0 = s;
          y.insert(y.end(), y0.begin(), y0.end());
          s.insert(s.end(), s0.begin(), s0.end());
        }
      }
      const std::size_t rows = y.size();
      auto x = nn::Tensor::from({rows, 1, C, M}, std::move(data));
      model.zero_grad();
      auto losses = compute_losses(model, x, y, s, weights, nn::Mode::kTrain, dropout_rng, cfg.mi_routing);
      nn::backward(losses.surrogate);
      adam.step(plateau.lr);
      const double w = static_cast<double>(rows);
      rec.l_task += w * losses.task.item();
      rec.l_domain += w * losses.domain.item();
      rec.l_mi += w * losses.mi.item();
      rec.l_total += w * losses.total;
      seen += w;
    }
    rec.l_task /= seen;
    rec.l_domain /= seen;
    rec.l_mi /= seen;
    rec.l_total /= seen;
    rec.val_macro_acc = macro_accuracy_of(model, val.epochs);
    log.epochs.push_back(rec);
    history.push_back(rec.val_macro_acc);

    if (rec.val_macro_acc > best_val) {
      best_val = rec.val_macro_acc;
      log.best_epoch = epoch;
      best.load_values_from(model);
    }
    scheduler_update(rec.val_macro_acc, plateau, cfg);
    if (early_stop_check(history, cfg)) {
      log.stop = StopReason::kEarlyStop;
      break;
    }
  }
  model.load_values_from(best);
  return log;
}

FitResult train_model(const EpochSet& train, const EpochSet& val, const TrainConfig& cfg,
                      const LossWeights& weights) {
  if (train.empty()) throw ValidationError("empty training set");
  const auto enc = nn::EncoderConfig::for_data(train.channels(), train.samples(), train.sample_rate_hz());
  FitResult r{SafModel(enc, std::max<std::size_t>(train.num_subjects(), 1), weights.lambda_grl,
                       derive_seed(cfg.seed, 4)),
              {}};
  r.log = fit(train, val, r.model, cfg, weights);
  return r;
}

std::vector<double> make_lambda_grid(double lo, double hi, std::size_t n) {
  if (n < 2) throw ConfigError("lambda grid needs at least 2 points");
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo <= hi)) throw ConfigError("lambda grid needs lo <= hi");
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + static_cast<double>(i) * (hi - lo) / static_cast<double>(n - 1);
  return v;
}

void GridResult::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "lambda_mi,lambda_grl,val_macro_acc\n";
  for (const auto& c : cells) {
    out << fmt6(c.lambda_mi) << ',' << fmt6(c.lambda_grl) << ',' << fmt6(c.val_macro_acc) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

GridCell select_best(std::span<const GridCell> cells) {
  if (cells.empty()) throw ValidationError("select_best: no grid cells");
  const auto* best = &cells.front();
  for (const auto& c : cells) {
    const bool better = c.val_macro_acc > best->val_macro_acc ||
                        (c.val_macro_acc == best->val_macro_acc &&
                         (c.lambda_grl < best->lambda_grl ||
                          (c.lambda_grl == best->lambda_grl && c.lambda_mi < best->lambda_mi)));
    if (better) best = &c;
  }
  return *best;
}

GridResult grid_search(const EpochSet& train, const EpochSet& val, const TrainConfig& cfg,
                       const GridConfig& grid) {
  const auto mi = make_lambda_grid(grid.lo, grid.hi, grid.n_mi);
  const auto grl = make_lambda_grid(grid.lo, grid.hi, grid.n_grl);
  TrainConfig cell_cfg = cfg;
  cell_cfg.max_epochs = grid.max_epochs;
  cell_cfg.min_epochs = std::min(cell_cfg.min_epochs, grid.max_epochs);

  GridResult result;
  result.cells.resize(mi.size() * grl.size());
  std::vector<std::exception_ptr> errors(result.cells.size());
  const int n = static_cast<int>(result.cells.size());
  const int jobs = static_cast<int>(std::max<std::size_t>(grid.jobs, 1));
#pragma omp parallel for num_threads(jobs) schedule(dynamic) if (jobs > 1)
  for (int i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    auto& cell = result.cells[idx];
    cell.lambda_mi = mi[idx / grl.size()];
    cell.lambda_grl = grl[idx % grl.size()];
    try {
      TrainConfig own = cell_cfg;
      own.seed = derive_seed(cfg.seed, 5, idx);
      auto r = train_model(train, val, own, {cell.lambda_mi, cell.lambda_grl});
      cell.val_macro_acc = r.log.best_val();
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const auto best = select_best(result.cells);
  result.best = {best.lambda_mi, best.lambda_grl};
  result.best_val = best.val_macro_acc;
  return result;
}

}  // namespace saf::train
