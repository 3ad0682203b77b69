#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "logitds/data_io.hpp"
#include "logitds/errors.hpp"
#include "logitds/posterior.hpp"
#include "logitds/rng.hpp"
#include "logitds/variational_net.hpp"

namespace logitds {

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 256;
  int epochs = 200;
  double pi = 0.1;
  std::uint64_t seed = 0;
  double val_fraction = 0.2;
  int mc_draws = 1;
  /// Posterior samples used for the per-epoch validation accuracy.
  int val_samples = 8;

  void check() const {
    if (!(learning_rate > 0.0) || batch_size <= 0 || epochs < 0 || !(pi >= 0.0) || mc_draws < 1 ||
        val_samples < 1) {
      throw ConfigError("train config: learning_rate, batch_size, pi, mc_draws, val_samples must be positive");
    }
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
      throw ConfigError("train config: val_fraction must lie in (0, 1)");
    }
  }
};

struct EpochStat {
  int epoch = 0;
  double loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochStat> epochs;
  /// Accuracy of the initial parameters; the first checkpoint is taken there.
  double init_val_accuracy = 0.0;
  /// Last epoch reaching the best accuracy; -1 when every epoch did worse than the initial parameters.
  int best_epoch = -1;
  double best_val_accuracy = 0.0;
  std::string checkpoint_path;
  VariationalParams best;
};

// ---------------------------------------------------------------------------

/// Shuffles, then takes the first round(N * val_fraction) items as validation.
inline std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& data, double val_fraction,
                                                               std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ConfigError("split_dataset: val_fraction must lie in (0, 1)");
  }
  const std::size_t n = data.size();
  if (n < 2) {
    throw DataError("split_dataset: need at least two items");
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = derive_stream(seed, StreamTag::split);
  shuffle_in_place(idx, rng);
  auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * val_fraction));
  n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  std::vector<std::size_t> val(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  return {data.subset(train), data.subset(val)};
}

// ---------------------------------------------------------------------------

struct AdamState {
  RealVec params;
  RealVec m;
  RealVec v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(RealVec params) {
    const std::size_t n = params.size();
    return {std::move(params), RealVec(n, 0.0), RealVec(n, 0.0)};
  }
};

/// In-place Adam update with bias correction.
inline void adam_update(AdamState& s, std::span<const double> grad, double learning_rate) {
  if (grad.size() != s.params.size()) {
    throw ConfigError("adam: gradient size does not match parameters");
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < grad.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grad[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
    const double mhat = s.m[i] / c1;
    const double vhat = s.v[i] / c2;
    s.params[i] -= learning_rate * mhat / (std::sqrt(vhat) + s.eps);
  }
}

inline AdamState adam_step(AdamState s, std::span<const double> grad, double learning_rate) {
  adam_update(s, grad, learning_rate);
  return s;
}

// ---------------------------------------------------------------------------

/// Fraction of inputs whose Monte Carlo predictive argmax equals the label.
inline double predictive_accuracy(const VariationalParams& p, const LabeledDataset& data, int models,
                                  std::uint64_t seed) {
  if (data.size() == 0) {
    return 0.0;
  }
  const PredictiveBatch pred = predictive_distribution(sample_posterior_logits(p, data.inputs, models, seed));
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    hits += pred.labels[i] == data.labels[i] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

/// Called with (params, epoch, validation accuracy) whenever an epoch matches or beats the
/// best validation accuracy so far; epoch -1 is the initial state.
using CheckpointSink = std::function<void(const VariationalParams&, int, double)>;

/// SGVB training on a pre-split dataset.
inline TrainReport train(VariationalParams params, const LabeledDataset& train_set, const LabeledDataset& val_set,
                         const TrainConfig& cfg, const CheckpointSink& on_improve = {}) {
  cfg.check();
  params.check();
  if (train_set.size() == 0) {
    throw DataError("train: empty training set");
  }
  if (train_set.inputs.cols() != params.arch.input_size()) {
    throw ConfigError("train: dataset features do not match architecture input");
  }
  if (train_set.class_count > params.arch.class_count()) {
    throw ConfigError("train: dataset has more classes than the network outputs");
  }

  const std::size_t n = params.size();
  RealVec theta(2 * n);
  std::copy(params.mu.begin(), params.mu.end(), theta.begin());
  std::copy(params.rho.begin(), params.rho.end(), theta.begin() + static_cast<std::ptrdiff_t>(n));
  AdamState adam = AdamState::for_params(std::move(theta));

  auto unpack = [&](VariationalParams& p) {
    std::copy(adam.params.begin(), adam.params.begin() + static_cast<std::ptrdiff_t>(n), p.mu.begin());
    std::copy(adam.params.begin() + static_cast<std::ptrdiff_t>(n), adam.params.end(), p.rho.begin());
  };

  TrainReport report;
  auto validate = [&](const VariationalParams& p, int epoch) {
    return predictive_accuracy(p, val_set, cfg.val_samples,
                               derive_seed(cfg.seed, StreamTag::validation, {static_cast<std::uint64_t>(epoch + 1)}));
  };

  report.init_val_accuracy = validate(params, -1);
  report.best_val_accuracy = report.init_val_accuracy;
  report.best = params;
  if (on_improve) {
    on_improve(params, -1, report.init_val_accuracy);
  }

  const std::size_t N = train_set.size();
  const auto B = static_cast<std::size_t>(cfg.batch_size);
  std::vector<std::size_t> order(N);
  RealVec grad(2 * n);
  Matrix xb;
  std::vector<int> yb;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = derive_stream(cfg.seed, StreamTag::shuffle, {static_cast<std::uint64_t>(epoch)});
    shuffle_in_place(order, shuffle);

    double loss_sum = 0.0;
    std::size_t steps = 0;
    for (std::size_t start = 0; start < N; start += B, ++steps) {
      const std::size_t len = std::min(B, N - start);
      xb.resize(static_cast<Eigen::Index>(len), train_set.inputs.cols());
      yb.resize(len);
      for (std::size_t k = 0; k < len; ++k) {
        xb.row(static_cast<Eigen::Index>(k)) = train_set.inputs.row(static_cast<Eigen::Index>(order[start + k]));
        yb[k] = train_set.labels[order[start + k]];
      }
      Rng noise = derive_stream(cfg.seed, StreamTag::train_noise,
                                {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(steps)});
      const ElboResult r = elbo_loss(params, xb, yb, cfg.pi, cfg.mc_draws, noise);
      if (!std::isfinite(r.loss)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(steps) + " (kl=" + std::to_string(r.kl) +
                           ", nll=" + std::to_string(r.nll) + ")");
      }
      std::copy(r.grad.mu.begin(), r.grad.mu.end(), grad.begin());
      std::copy(r.grad.rho.begin(), r.grad.rho.end(), grad.begin() + static_cast<std::ptrdiff_t>(n));
      adam_update(adam, grad, cfg.learning_rate);
      unpack(params);
      loss_sum += r.loss;
    }

    EpochStat stat{epoch, loss_sum / static_cast<double>(steps), validate(params, epoch)};
    report.epochs.push_back(stat);
    // Ties go to the later epoch: once accuracy saturates the posterior keeps training.
    if (stat.val_accuracy >= report.best_val_accuracy) {
      report.best_val_accuracy = stat.val_accuracy;
      report.best_epoch = epoch;
      report.best = params;
      if (on_improve) {
        on_improve(params, epoch, stat.val_accuracy);
      }
    }
  }
  return report;
}

/// Splits `data` per cfg.val_fraction, then trains.
inline TrainReport train(VariationalParams params, const LabeledDataset& data, const TrainConfig& cfg,
                         const CheckpointSink& on_improve = {}) {
  cfg.check();
  auto [train_set, val_set] = split_dataset(data, cfg.val_fraction, cfg.seed);
  return train(std::move(params), train_set, val_set, cfg, on_improve);
}

}  // namespace logitds
