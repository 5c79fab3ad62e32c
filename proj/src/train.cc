// Copyright 2026 The vaenmf Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "vaenmf/train.h"

#include <cmath>
#include <limits>
#include <numeric>

namespace vaenmf {
namespace {

// Fisher-Yates with a fixed reduction so epoch order does not depend on the
// standard library's distribution implementations.
std::vector<Eigen::Index> Permutation(Eigen::Index n, Rng& rng) {
  std::vector<Eigen::Index> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(rng() % static_cast<uint64_t>(i + 1));
    std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
  }
  return idx;
}

}  // namespace

void TrainConfig::Validate() const {
  if (batch_size <= 0) throw ValidationError("train: batch_size must be positive");
  if (!(learning_rate > 0.0))
    throw ValidationError("train: learning_rate must be positive");
  if (lr_patience <= 0 || early_stop_patience <= 0)
    throw ValidationError("train: patience values must be positive");
  if (!(lr_factor > 0.0 && lr_factor < 1.0))
    throw ValidationError("train: lr_factor must lie in (0, 1)");
  if (max_epochs < 0) throw ValidationError("train: max_epochs must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 &&
        adam_beta2 < 1.0 && adam_epsilon > 0.0))
    throw ValidationError("train: invalid Adam moment settings");
  if (!(plateau_rel_tol >= 0.0))
    throw ValidationError("train: plateau_rel_tol must be >= 0");
}

PlateauScheduler::PlateauScheduler(const TrainConfig& config)
    : lr_patience_(config.lr_patience),
      stop_patience_(config.early_stop_patience),
      rel_tol_(config.plateau_rel_tol),
      best_(std::numeric_limits<double>::infinity()) {}

PlateauScheduler::Event PlateauScheduler::Observe(double validation_loss) {
  Event e;
  const bool first = std::isinf(best_);
  if (first || validation_loss < best_ - rel_tol_ * std::abs(best_)) {
    e.improved = true;
    best_ = validation_loss;
    since_improvement_ = 0;
    since_lr_change_ = 0;
    return e;
  }
  ++since_improvement_;
  ++since_lr_change_;
  // The rate is cut once the plateau has outlasted the patience window, and
  // the window restarts after each cut.
  if (since_lr_change_ > lr_patience_) {
    e.halve_lr = true;
    since_lr_change_ = 0;
  }
  if (since_improvement_ >= stop_patience_) e.stop = true;
  return e;
}

AdamOptimizer::AdamOptimizer(const VaeShape& shape, const TrainConfig& config)
    : beta1_(config.adam_beta1),
      beta2_(config.adam_beta2),
      epsilon_(config.adam_epsilon),
      m_(VaeParams::Zeros(shape)),
      v_(VaeParams::Zeros(shape)) {}

void AdamOptimizer::Step(VaeParams& params, const VaeParams& gradient,
                         double learning_rate) {
  ++step_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
  auto p = params.layers();
  auto g = gradient.layers();
  auto m = m_.layers();
  auto v = v_.layers();
  auto update = [&](auto& param, const auto& grad, auto& mom, auto& vel) {
    mom = beta1_ * mom + (1.0 - beta1_) * grad;
    vel = beta2_ * vel + (1.0 - beta2_) * grad.cwiseAbs2();
    param.array() -= learning_rate * (mom.array() / c1) /
                     ((vel.array() / c2).sqrt() + epsilon_);
  };
  for (size_t i = 0; i < p.size(); ++i) {
    update(p[i]->weight, g[i]->weight, m[i]->weight, v[i]->weight);
    update(p[i]->bias, g[i]->bias, m[i]->bias, v[i]->bias);
  }
}

double ValidationLoss(const VaeParams& params, const PowerSpectrogram& frames,
                      uint64_t seed) {
  if (frames.cols() == 0) throw Error("validation set is empty");
  Rng rng(seed);
  const Matrix noise =
      RandomNormal(params.encoder_mean.weight.rows(), frames.cols(), rng);
  return ElboValue(params, frames, noise) / static_cast<double>(frames.cols());
}

Checkpoint Train(const PowerSpectrogram& train_frames,
                 const PowerSpectrogram& validation_frames,
                 const TrainConfig& config, const StftConfig& stft,
                 const Checkpoint* init, std::string provenance,
                 const EpochCallback& on_epoch) {
  config.Validate();
  if (train_frames.cols() == 0) throw ValidationError("train: empty training set");
  if (validation_frames.cols() == 0)
    throw ValidationError("train: empty validation set");
  if (validation_frames.rows() != train_frames.rows())
    throw ValidationError("train: train/validation frame sizes differ");

  Checkpoint out;
  out.train_config = config;
  out.stft = stft;
  out.provenance = std::move(provenance);
  if (init != nullptr) {
    if (init->params.shape().input_dim != train_frames.rows())
      throw ValidationError("train: initial checkpoint expects " +
                            std::to_string(init->params.shape().input_dim) +
                            "-bin frames, data has " +
                            std::to_string(train_frames.rows()));
    out.params = init->params;
    out.train_config.shape = init->params.shape();
  } else {
    VaeShape shape = config.shape;
    shape.input_dim = static_cast<int>(train_frames.rows());
    out.train_config.shape = shape;
    Rng init_rng(DeriveSeed(config.seed, 0));
    out.params = VaeParams::GlorotUniform(shape, init_rng);
  }

  VaeParams params = out.params;
  AdamOptimizer adam(params.shape(), config);
  PlateauScheduler scheduler(config);
  Rng rng(DeriveSeed(config.seed, 1));
  const uint64_t val_seed = DeriveSeed(config.seed, 2);
  const Eigen::Index n = train_frames.cols();
  const Eigen::Index f_dim = train_frames.rows();
  double lr = config.learning_rate;
  TrainHistory& history = out.history;
  history.stop_reason = config.max_epochs == 0 ? "none" : "max_epochs";

  Matrix batch;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.learning_rate = lr;
    const auto order = Permutation(n, rng);
    double total = 0.0;
    try {
      for (Eigen::Index start = 0; start < n; start += config.batch_size) {
        const Eigen::Index len = std::min<Eigen::Index>(config.batch_size, n - start);
        batch.resize(f_dim, len);
        for (Eigen::Index j = 0; j < len; ++j)
          batch.col(j) = train_frames.col(order[static_cast<size_t>(start + j)]);
        ElboResult r = ElboLoss(params, batch, rng);
        total += r.loss;
        const double scale = 1.0 / static_cast<double>(len);
        for (DenseLayer* l : r.gradient.layers()) {
          l->weight *= scale;
          l->bias *= scale;
        }
        adam.Step(params, r.gradient, lr);
      }
      rec.train_loss = total / static_cast<double>(n);
      rec.validation_loss = ValidationLoss(params, validation_frames, val_seed);
    } catch (const Error& e) {
      history.stop_reason = "diverged";
      throw TrainingDiverged("training diverged in epoch " +
                                 std::to_string(epoch) + ": " + e.what(),
                             history);
    }
    if (!std::isfinite(rec.validation_loss) || !params.AllFinite()) {
      history.stop_reason = "diverged";
      history.epochs.push_back(rec);
      throw TrainingDiverged(
          "training diverged in epoch " + std::to_string(epoch), history);
    }

    const auto event = scheduler.Observe(rec.validation_loss);
    rec.improved = event.improved;
    rec.lr_halved = event.halve_lr;
    if (event.improved) {
      out.params = params;
      history.best_epoch = epoch;
    }
    if (event.halve_lr) lr *= config.lr_factor;
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (event.stop) {
      history.stop_reason = "early_stop";
      break;
    }
  }
  return out;
}

}  // namespace vaenmf
