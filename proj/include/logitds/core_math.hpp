#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "logitds/errors.hpp"

namespace logitds {

using RealVec = std::vector<double>;

/// (1/beta) * ln(1 + exp(beta * x)), stable for large |x|.
inline double softplus(double x, double beta = 1.0) {
  const double t = beta * x;
  if (t > 30.0) {
    // ln(1 + e^t) = t + ln(1 + e^-t)
    return (t + std::log1p(std::exp(-t))) / beta;
  }
  return std::log1p(std::exp(t)) / beta;
}

/// Logistic sigmoid; d softplus(x) / dx for beta = 1.
inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) {
    throw std::invalid_argument("log_sum_exp: empty input");
  }
  const double m = *std::max_element(v.begin(), v.end());
  if (v.size() == 1) {
    return m;
  }
  double acc = 0.0;
  for (double x : v) {
    acc += std::exp(x - m);
  }
  return m + std::log(acc);
}

inline void softmax_into(std::span<const double> logits, std::span<double> out) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    acc += out[i];
  }
  for (double& p : out) {
    p /= acc;
  }
}

inline RealVec softmax(std::span<const double> logits) {
  if (logits.empty()) {
    throw std::invalid_argument("softmax: empty input");
  }
  RealVec out(logits.size());
  softmax_into(logits, out);
  return out;
}

/// Entropy in nats without the distribution check; 0 * ln 0 = 0.
inline double entropy_unchecked(std::span<const double> p) {
  double h = 0.0;
  for (double x : p) {
    if (x > 0.0) {
      h -= x * std::log(x);
    }
  }
  return h;
}

/// Shannon entropy in nats. Rejects inputs that are not a probability vector.
inline double shannon_entropy(std::span<const double> p) {
  if (p.empty()) {
    throw std::invalid_argument("shannon_entropy: empty input");
  }
  double total = 0.0;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      throw std::invalid_argument("shannon_entropy: negative or non-finite probability");
    }
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("shannon_entropy: probabilities do not sum to 1");
  }
  return entropy_unchecked(p);
}

/// Index of the largest element; lowest index wins ties.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) {
      best = i;
    }
  }
  return best;
}

}  // namespace logitds
