#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "dre/adam.hpp"
#include "dre/errors.hpp"
#include "dre/losses.hpp"
#include "dre/mlp.hpp"
#include "dre/rng.hpp"
#include "dre/tape.hpp"

namespace dre {

struct TrainConfig {
  LossSpec loss;
  double lr = 1e-4;
  int batch = 128;
  int patience = 3;       // epochs without strict validation improvement
  int max_epochs = 5000;
  int hidden_width = 256;
  int hidden_layers = 3;
  std::uint64_t seed = 0;
  std::uint64_t trial = 0;  // stream namespace when one seed drives many trials

  std::vector<int> hidden() const {
    return std::vector<int>(static_cast<std::size_t>(hidden_layers), hidden_width);
  }
};

enum class StopReason { patience, max_epochs, divergence };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::patience: return "patience";
    case StopReason::max_epochs: return "max_epochs";
    case StopReason::divergence: return "divergence";
  }
  return "?";
}

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainReport {
  int epochs_run = 0;
  int best_epoch = -1;
  double best_val_loss = std::numeric_limits<double>::quiet_NaN();
  std::vector<EpochStats> history;
  StopReason stop_reason = StopReason::max_epochs;
  // best_val_loss minus the Monte Carlo estimate of -D_f; NaN when the true
  // ratio was not supplied.
  double val_gap = std::numeric_limits<double>::quiet_NaN();
};

struct TrainedModel {
  MlpModel model;
  LossSpec loss;
};

inline std::vector<double> predict_T(const MlpModel& model, const Tensor& x) {
  Tensor t = model.forward(x);
  return t.v;
}

// Ratio estimate phi = parameterization(T); strictly positive by construction.
inline std::vector<double> predict_ratio(const TrainedModel& tm, const Tensor& x) {
  std::vector<double> out = predict_T(tm.model, x);
  for (double& t : out) t = phi_of_T(t, tm.loss);
  return out;
}

namespace detail {

inline double validation_loss(const MlpModel& model, const LossSpec& spec,
                              const Tensor& p_val, const Tensor& q_val) {
  const std::vector<double> tp = predict_T(model, p_val);
  const std::vector<double> tq = predict_T(model, q_val);
  return empirical_loss(tp, tq, spec);
}

}  // namespace detail

// Minimizes the sample-based f-divergence loss with paired P/Q mini-batches
// and early stopping on the full validation batches. Returns the best
// snapshot by validation loss, never the final parameters. Non-finite losses
// or gradients stop training with StopReason::divergence after rewinding to
// the best snapshot.
//
// true_ratios_on_Pval, when supplied, feeds the Monte Carlo -D_f reference
// for TrainReport::val_gap.
inline TrainedModel train(const Tensor& p_train, const Tensor& q_train,
                          const Tensor& p_val, const Tensor& q_val,
                          const TrainConfig& cfg, TrainReport& report,
                          std::span<const double> true_ratios_on_Pval = {}) {
  if (p_train.cols != q_train.cols || p_train.cols != p_val.cols ||
      p_train.cols != q_val.cols)
    throw precondition_error("train: sample widths disagree");
  if (cfg.batch < 1) throw config_error("train: batch must be >= 1");
  if (cfg.patience < 1) throw config_error("train: patience must be >= 1");
  if (cfg.max_epochs < 1) throw config_error("train: max_epochs must be >= 1");
  const int steps_per_epoch = std::min(p_train.rows, q_train.rows) / cfg.batch;
  if (steps_per_epoch < 1)
    throw config_error("train: fewer training rows than one batch");

  rng_stream init_rng =
      derive_stream(cfg.seed, cfg.trial, split_id::aux, source_id::init);
  MlpModel model = MlpModel::init(p_train.cols, cfg.hidden(), init_rng);
  const std::vector<Tensor*> param_ptrs = model.parameters();
  AdamState adam = AdamState::create(
      std::vector<const Tensor*>(param_ptrs.begin(), param_ptrs.end()), cfg.lr);
  rng_stream shuffle_rng =
      derive_stream(cfg.seed, cfg.trial, split_id::train, source_id::shuffle);

  report = TrainReport{};
  MlpModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  int stale_epochs = 0;
  StopReason reason = StopReason::max_epochs;

  std::vector<int> p_idx(static_cast<std::size_t>(p_train.rows));
  std::vector<int> q_idx(static_cast<std::size_t>(q_train.rows));
  std::iota(p_idx.begin(), p_idx.end(), 0);
  std::iota(q_idx.begin(), q_idx.end(), 0);

  Tape tape;
  int epoch = 0;
  for (; epoch < cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(p_idx);
    shuffle_rng.shuffle(q_idx);

    bool diverged = false;
    double train_loss_acc = 0.0;
    for (int step = 0; step < steps_per_epoch && !diverged; ++step) {
      std::vector<int> pb(p_idx.begin() + static_cast<std::ptrdiff_t>(step) * cfg.batch,
                          p_idx.begin() + static_cast<std::ptrdiff_t>(step + 1) * cfg.batch);
      std::vector<int> qb(q_idx.begin() + static_cast<std::ptrdiff_t>(step) * cfg.batch,
                          q_idx.begin() + static_cast<std::ptrdiff_t>(step + 1) * cfg.batch);
      try {
        tape.reset();
        const MlpTapeBinding bind = push_params(tape, model);
        const int xp = tape.leaf(p_train.gather_rows(pb));
        const int xq = tape.leaf(q_train.gather_rows(qb));
        const int tp = forward_graph(tape, bind, xp, model.layer_count());
        const int tq = forward_graph(tape, bind, xq, model.layer_count());
        const int loss_node = loss_graph(tape, tp, tq, cfg.loss);
        train_loss_acc += tape.val(loss_node).v[0];
        tape.backward(loss_node);

        std::vector<const Tensor*> grads;
        for (int id : bind.all_ids()) grads.push_back(&tape.grad(id));
        adam.step(model.parameters(), grads);
      } catch (const non_finite_error&) {
        diverged = true;
      }
    }

    EpochStats stats;
    stats.train_loss = train_loss_acc / static_cast<double>(steps_per_epoch);
    if (!diverged) {
      try {
        stats.val_loss = detail::validation_loss(model, cfg.loss, p_val, q_val);
      } catch (const non_finite_error&) {
        diverged = true;
      }
    }
    if (diverged) {
      stats.val_loss = std::numeric_limits<double>::quiet_NaN();
      report.history.push_back(stats);
      reason = StopReason::divergence;
      ++epoch;
      break;
    }
    report.history.push_back(stats);

    if (stats.val_loss < best_val) {
      best_val = stats.val_loss;
      best = model;
      best_epoch = epoch;
      stale_epochs = 0;
    } else {
      ++stale_epochs;
      if (stale_epochs >= cfg.patience) {
        reason = StopReason::patience;
        ++epoch;
        break;
      }
    }
  }

  // A run that diverged before any finished validation keeps the freshly
  // initialized parameters as its snapshot.
  if (best_epoch < 0) {
    best_val = std::numeric_limits<double>::quiet_NaN();
    try {
      best_val = detail::validation_loss(best, cfg.loss, p_val, q_val);
    } catch (const non_finite_error&) {
    }
  }

  report.epochs_run = epoch;
  report.best_epoch = best_epoch;
  report.best_val_loss = best_val;
  report.stop_reason = reason;
  if (!true_ratios_on_Pval.empty()) {
    const double df = monte_carlo_Df(cfg.loss.gen, true_ratios_on_Pval);
    report.val_gap = report.best_val_loss - (-df);
  }
  return TrainedModel{std::move(best), cfg.loss};
}

// Largest max-norm difference quotient |f(x_i) - f(x_j)| / ||x_i - x_j||_inf
// over randomly sampled index pairs; a lower bound on the true Lipschitz
// constant. values[i] must hold f applied to row i of points.
inline double estimate_lipschitz(std::span<const double> values, const Tensor& points,
                                 int n_pairs, rng_stream& rng) {
  if (static_cast<std::size_t>(points.rows) != values.size())
    throw precondition_error("estimate_lipschitz: values/points size mismatch");
  if (points.rows < 2) throw precondition_error("estimate_lipschitz: need >= 2 points");
  if (n_pairs < 1) throw precondition_error("estimate_lipschitz: need >= 1 pairs");
  double best = 0.0;
  for (int k = 0; k < n_pairs; ++k) {
    const int i = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(points.rows)));
    const int j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(points.rows)));
    if (i == j) continue;
    double dist = 0.0;
    for (int c = 0; c < points.cols; ++c)
      dist = std::max(dist, std::abs(points.at(i, c) - points.at(j, c)));
    if (dist == 0.0) continue;  // coincident rows carry no slope information
    best = std::max(best, std::abs(values[static_cast<std::size_t>(i)] -
                                   values[static_cast<std::size_t>(j)]) /
                              dist);
  }
  return best;
}

}  // namespace dre
