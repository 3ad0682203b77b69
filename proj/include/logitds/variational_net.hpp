#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "logitds/architecture.hpp"
#include "logitds/core_math.hpp"
#include "logitds/network.hpp"
#include "logitds/rng.hpp"
#include "logitds/tensor.hpp"

namespace logitds {

/// Mean-field Gaussian posterior q(w) = prod_i N(mu_i, softplus(rho_i)^2), with an
/// isotropic zero-mean Gaussian prior of variance `prior_variance`. Biases are
/// variational like every other weight.
struct VariationalParams {
  Architecture arch;
  RealVec mu;
  RealVec rho;
  double prior_variance = 0.01;

  std::size_t size() const { return mu.size(); }

  void check() const {
    if (mu.size() != arch.parameter_count() || rho.size() != arch.parameter_count()) {
      throw ConfigError("variational params: mu/rho size does not match architecture");
    }
    if (!(prior_variance > 0.0)) {
      throw ConfigError("variational params: prior_variance must be positive");
    }
  }

  bool operator==(const VariationalParams&) const = default;
};

/// One concrete network drawn from q.
struct WeightSample {
  Architecture arch;
  RealVec weights;
};

struct InitConfig {
  double mu_mean = 0.0;
  double mu_variance = 0.01;
  double rho_mean = -5.0;
  double rho_variance = 0.01;
  double prior_variance = 0.01;
};

inline VariationalParams init_params(const Architecture& arch, std::uint64_t seed, const InitConfig& cfg = {}) {
  VariationalParams p{arch, RealVec(arch.parameter_count()), RealVec(arch.parameter_count()), cfg.prior_variance};
  Rng rng = derive_stream(seed, StreamTag::init);
  std::normal_distribution<double> mu_dist(cfg.mu_mean, std::sqrt(cfg.mu_variance));
  std::normal_distribution<double> rho_dist(cfg.rho_mean, std::sqrt(cfg.rho_variance));
  for (double& m : p.mu) {
    m = mu_dist(rng);
  }
  for (double& r : p.rho) {
    r = rho_dist(rng);
  }
  p.check();
  return p;
}

inline RealVec sample_noise(std::size_t n, Rng& rng) {
  std::normal_distribution<double> unit(0.0, 1.0);
  RealVec eps(n);
  for (double& e : eps) {
    e = unit(rng);
  }
  return eps;
}

/// w_i = mu_i + softplus(rho_i) * eps_i.
inline WeightSample weights_from_noise(const VariationalParams& p, std::span<const double> eps) {
  WeightSample s{p.arch, RealVec(p.size())};
  for (std::size_t i = 0; i < p.size(); ++i) {
    s.weights[i] = p.mu[i] + softplus(p.rho[i]) * eps[i];
  }
  return s;
}

inline WeightSample sample_weights(const VariationalParams& p, Rng& rng) {
  const RealVec eps = sample_noise(p.size(), rng);
  return weights_from_noise(p, eps);
}

/// Weights at the posterior mean.
inline WeightSample mean_weights(const VariationalParams& p) { return {p.arch, p.mu}; }

/// Pre-softmax outputs for a single input.
inline RealVec forward(const WeightSample& s, std::span<const double> input) {
  if (input.size() != static_cast<std::size_t>(s.arch.input_size())) {
    throw ConfigError("forward: input size mismatch");
  }
  Matrix x = ConstMatrixMap(input.data(), 1, static_cast<Eigen::Index>(input.size()));
  const Matrix z = forward_batch(s.arch, s.weights, x);
  return RealVec(z.data(), z.data() + z.size());
}

inline Matrix forward(const WeightSample& s, const Matrix& inputs) { return forward_batch(s.arch, s.weights, inputs); }

/// Closed-form KL(q || prior) summed over all weights.
inline double kl_to_prior(const VariationalParams& p) {
  p.check();
  const double s2 = p.prior_variance;
  const double log_s = 0.5 * std::log(s2);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double sigma = softplus(p.rho[i]);
    kl += log_s - std::log(sigma) + (sigma * sigma + p.mu[i] * p.mu[i]) / (2.0 * s2) - 0.5;
  }
  return kl;
}

struct Gradient {
  RealVec mu;
  RealVec rho;
};

struct ElboResult {
  double loss = 0.0;
  double kl = 0.0;
  double nll = 0.0;
  Gradient grad;
};

/// pi * KL(q || prior) - mean over noise draws of the summed batch log-likelihood.
/// One entry of `noise` per Monte Carlo draw, each of length params.size().
inline ElboResult elbo_loss(const VariationalParams& p, const Matrix& inputs, std::span<const int> labels, double pi,
                            std::span<const RealVec> noise) {
  p.check();
  if (inputs.rows() == 0 || static_cast<std::size_t>(inputs.rows()) != labels.size()) {
    throw ConfigError("elbo_loss: batch must be nonempty with one label per input");
  }
  if (noise.empty()) {
    throw ConfigError("elbo_loss: need at least one Monte Carlo draw");
  }
  if (!(pi >= 0.0)) {
    throw ConfigError("elbo_loss: pi must be non-negative");
  }
  const int classes = p.arch.class_count();
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw ConfigError("elbo_loss: label " + std::to_string(y) + " out of range");
    }
  }

  const std::size_t n = p.size();
  ElboResult r;
  r.grad.mu.assign(n, 0.0);
  r.grad.rho.assign(n, 0.0);

  RealVec sigma(n), dsigma(n);
  for (std::size_t i = 0; i < n; ++i) {
    sigma[i] = softplus(p.rho[i]);
    dsigma[i] = sigmoid(p.rho[i]);
  }

  const double inv_draws = 1.0 / static_cast<double>(noise.size());
  RealVec gw(n);
  ForwardCache cache;
  for (const RealVec& eps : noise) {
    if (eps.size() != n) {
      throw ConfigError("elbo_loss: noise draw has wrong length");
    }
    RealVec w(n);
    for (std::size_t i = 0; i < n; ++i) {
      w[i] = p.mu[i] + sigma[i] * eps[i];
    }
    Matrix z = forward_batch(p.arch, w, inputs, &cache);
    Matrix dz(z.rows(), z.cols());
    double nll = 0.0;
    for (Eigen::Index b = 0; b < z.rows(); ++b) {
      std::span<const double> row(z.row(b).data(), static_cast<std::size_t>(z.cols()));
      const double lse = log_sum_exp(row);
      const int y = labels[static_cast<std::size_t>(b)];
      nll += lse - z(b, y);
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        dz(b, c) = std::exp(z(b, c) - lse) * inv_draws;
      }
      dz(b, y) -= inv_draws;
    }
    r.nll += nll * inv_draws;
    std::fill(gw.begin(), gw.end(), 0.0);
    backward_batch(p.arch, w, cache, dz, gw);
    for (std::size_t i = 0; i < n; ++i) {
      r.grad.mu[i] += gw[i];
      r.grad.rho[i] += gw[i] * eps[i] * dsigma[i];
    }
  }

  const double s2 = p.prior_variance;
  r.kl = kl_to_prior(p);
  r.loss = r.nll;
  // pi = 0 drops the KL term entirely; 0 * inf would poison a sigma -> 0 posterior.
  if (pi > 0.0) {
    for (std::size_t i = 0; i < n; ++i) {
      r.grad.mu[i] += pi * p.mu[i] / s2;
      r.grad.rho[i] += pi * (-1.0 / sigma[i] + sigma[i] / s2) * dsigma[i];
    }
    r.loss += pi * r.kl;
  }
  return r;
}

/// Draws `n_mc` noise vectors from `rng` and evaluates the objective.
inline ElboResult elbo_loss(const VariationalParams& p, const Matrix& inputs, std::span<const int> labels, double pi,
                            int n_mc, Rng& rng) {
  if (n_mc < 1) {
    throw ConfigError("elbo_loss: n_mc must be >= 1");
  }
  std::vector<RealVec> noise;
  noise.reserve(static_cast<std::size_t>(n_mc));
  for (int t = 0; t < n_mc; ++t) {
    noise.push_back(sample_noise(p.size(), rng));
  }
  return elbo_loss(p, inputs, labels, pi, noise);
}

}  // namespace logitds
