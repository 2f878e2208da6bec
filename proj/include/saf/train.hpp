#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "saf/isbcs.hpp"
#include "saf/model.hpp"
#include "saf/types.hpp"

namespace saf::train {

using nn::BasicSafModel;
using nn::BasicTensor;
using nn::SafModel;

struct LossWeights {
  double lambda_mi = 0.0;
  double lambda_grl = 0.0;

  void validate() const;
};

// How the entropy term reaches the encoder. kReversed reads the grl-routed
// domain logits (encoder maximizes entropy); kLiteral minimizes +H everywhere.
enum class MiRouting { kReversed, kLiteral };

struct TrainConfig {
  double lr = 0.001;
  std::size_t batch_size = 32;
  std::size_t min_epochs = 20;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  std::size_t plateau_window = 5;
  double improvement_eps = 0.001;
  double lr_factor = 0.5;
  double lr_floor = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  SwapConfig swap{0.0, 0, false};
  MiRouting mi_routing = MiRouting::kReversed;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double l_task = 0.0;
  double l_domain = 0.0;
  double l_mi = 0.0;
  double l_total = 0.0;
  double lr = 0.0;
  double val_macro_acc = 0.0;
};

enum class StopReason { kMaxEpochs, kEarlyStop };

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based
  StopReason stop = StopReason::kMaxEpochs;

  double best_val() const;
  void write_csv(const std::filesystem::path& path) const;
};

template <class T>
struct Losses {
  BasicTensor<T> task;
  BasicTensor<T> domain;
  BasicTensor<T> mi;
  // What backward() runs on: task + lambda_mi * mi + domain. lambda_grl is
  // applied inside the reversal layer.
  BasicTensor<T> surrogate;
  // Reported objective: task + lambda_mi * mi + lambda_grl * domain.
  double total = 0.0;
};

// x [B, 1, C, M]; y task labels; s subject indices (< K).
template <class T>
Losses<T> compute_losses(BasicSafModel<T>& model, const BasicTensor<T>& x, std::span<const int> y,
                         std::span<const int> s, const LossWeights& weights, nn::Mode mode,
                         Rng& dropout_rng, MiRouting routing = MiRouting::kReversed);

// Adam with bias correction. Holds references to the parameter tensors.
class Adam {
 public:
  Adam(std::vector<nn::Tensor> params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(double lr);
  std::size_t steps() const { return t_; }
  std::span<const float> first_moment(std::size_t i) const { return m_[i]; }
  std::span<const float> second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<nn::Tensor> params_;
  std::vector<std::vector<float>> m_, v_;
  double beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

struct PlateauState {
  double lr = 0.001;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t stagnant = 0;
};

// Feeds the newest value of the monitored series. Returns the (possibly
// reduced) learning rate.
double scheduler_update(double metric, PlateauState& state, const TrainConfig& cfg);

// history holds the monitored metric per finished epoch (1-based epoch =
// history.size()).
bool early_stop_check(std::span<const double> history, const TrainConfig& cfg);

// Stacks epochs into [B, 1, C, M] floats.
std::vector<float> stack_inputs(std::span<const Epoch* const> batch);

// Eval-mode argmax of the task head.
std::vector<int> predict(SafModel& model, std::span<const Epoch> epochs, std::size_t batch = 256);
double macro_accuracy_of(SafModel& model, std::span<const Epoch> epochs);

// Trains model in place and leaves it at the best validation epoch. Subject
// indices of train define the domain labels; model.num_domains() must cover them.
TrainLog fit(const EpochSet& train, const EpochSet& val, SafModel& model, const TrainConfig& cfg,
             const LossWeights& weights);

// Builds and trains a fresh model (init seed derived from cfg.seed).
struct FitResult {
  SafModel model;
  TrainLog log;
};
FitResult train_model(const EpochSet& train, const EpochSet& val, const TrainConfig& cfg,
                      const LossWeights& weights);

// n evenly spaced values from lo to hi inclusive.
std::vector<double> make_lambda_grid(double lo, double hi, std::size_t n);

struct GridConfig {
  double lo = 0.001;
  double hi = 10.0;
  std::size_t n_mi = 25;
  std::size_t n_grl = 10;
  std::size_t max_epochs = 40;
  std::size_t jobs = 1;
};

struct GridCell {
  double lambda_mi = 0.0;
  double lambda_grl = 0.0;
  double val_macro_acc = 0.0;
};

struct GridResult {
  LossWeights best;
  double best_val = 0.0;
  std::vector<GridCell> cells;  // ordered by (lambda_mi, lambda_grl)

  void write_csv(const std::filesystem::path& path) const;
};

// Highest val macro-accuracy; ties go to smaller lambda_grl, then smaller
// lambda_mi. cells must be non-empty.
GridCell select_best(std::span<const GridCell> cells);

// One model per (lambda_mi, lambda_grl) cell. Cell i trains with seed
// derive_seed(cfg.seed, 5, i), so results do not depend on the worker count.
GridResult grid_search(const EpochSet& train, const EpochSet& val, const TrainConfig& cfg,
                       const GridConfig& grid);

}  // namespace saf::train
