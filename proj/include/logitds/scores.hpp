#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "logitds/core_math.hpp"
#include "logitds/errors.hpp"
#include "logitds/posterior.hpp"

namespace logitds {

/// Direction in which a score flags an input as out-of-distribution.
enum class Orientation { higher_is_ood, lower_is_ood };

inline std::string_view to_string(Orientation o) {
  return o == Orientation::higher_is_ood ? "higher_is_ood" : "lower_is_ood";
}

struct ScoreVector {
  std::string name;
  RealVec values;
  Orientation orientation = Orientation::higher_is_ood;
};

/// Registered score: short CLI name, table heading, OoD orientation.
struct ScoreInfo {
  std::string_view name;
  std::string_view heading;
  Orientation orientation;
};

// Disagreement scores (DS, WE, softmax DS) are large when the models agree, so
// small values flag OoD. Everything else grows with uncertainty.
inline constexpr std::array<ScoreInfo, 8> kScores{{
    {"pe", "PE", Orientation::higher_is_ood},
    {"ee", "EE", Orientation::higher_is_ood},
    {"mi", "MI", Orientation::higher_is_ood},
    {"ds", "DS", Orientation::lower_is_ood},
    {"we", "WE", Orientation::lower_is_ood},
    {"std_ll", "Std of LLs", Orientation::higher_is_ood},
    {"kl_shift", "KL shift", Orientation::higher_is_ood},
    {"softmax_ds", "Softmax DS", Orientation::lower_is_ood},
}};

inline const ScoreInfo& score_info(std::string_view name) {
  for (const auto& s : kScores) {
    if (s.name == name) {
      return s;
    }
  }
  throw ConfigError("unknown score '" + std::string(name) + "'");
}

inline constexpr double kDefaultEpsilon = 1e-15;

// ---------------------------------------------------------------------------
// Scalar scores over one input's M posterior samples.

/// z if z > 0, otherwise epsilon.
inline double truncate_logit(double z, double epsilon = kDefaultEpsilon) { return z > 0.0 ? z : epsilon; }

/// Point on the probability simplex over the M posterior samples.
class NormalizedWeights {
 public:
  /// values / sum(values). All values must be strictly positive.
  explicit NormalizedWeights(std::span<const double> values) {
    if (values.size() < 2) {
      throw ConfigError("normalized_weights: need at least two posterior samples");
    }
    double total = 0.0;
    for (double v : values) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw ConfigError("normalized_weights: values must be positive and finite (truncate logits first)");
      }
      total += v;
    }
    eta_.reserve(values.size());
    for (double v : values) {
      eta_.push_back(v / total);
    }
  }

  std::span<const double> eta() const { return eta_; }
  std::size_t size() const { return eta_.size(); }

 private:
  std::vector<double> eta_;
};

inline NormalizedWeights normalized_weights(std::span<const double> values) { return NormalizedWeights(values); }

/// 1 / sum eta^2, the effective sample size; M for full agreement, 1 when one model dominates.
inline double disagreement_score(const NormalizedWeights& w) {
  double sq = 0.0;
  for (double e : w.eta()) {
    sq += e * e;
  }
  return 1.0 / sq;
}

inline double weight_entropy(const NormalizedWeights& w) { return entropy_unchecked(w.eta()); }

/// -(1/M) sum ln(M eta_m); zero when every eta_m = 1/M.
inline double kl_shift_estimate(const NormalizedWeights& w) {
  const auto M = static_cast<double>(w.size());
  double acc = 0.0;
  for (double e : w.eta()) {
    if (!(e > 0.0)) {
      throw ConfigError("kl_shift_estimate: zero weight");
    }
    acc += std::log(M * e);
  }
  return -acc / M;
}

/// Sample standard deviation (divisor M - 1) of ln(zstar).
inline double std_log_logits(std::span<const double> zstar) {
  if (zstar.size() < 2) {
    throw ConfigError("std_log_logits: need at least two posterior samples");
  }
  RealVec logs;
  logs.reserve(zstar.size());
  double mean = 0.0;
  for (double z : zstar) {
    if (!(z > 0.0)) {
      throw ConfigError("std_log_logits: values must be positive (truncate logits first)");
    }
    logs.push_back(std::log(z));
    mean += logs.back();
  }
  mean /= static_cast<double>(logs.size());
  double ss = 0.0;
  for (double l : logs) {
    ss += (l - mean) * (l - mean);
  }
  return std::sqrt(ss / static_cast<double>(logs.size() - 1));
}

// ---------------------------------------------------------------------------
// Per-input scores over a posterior logit tensor.

namespace detail {

inline ScoreVector make_score(std::string_view name, std::size_t n) {
  const ScoreInfo& info = score_info(name);
  return {std::string(info.name), RealVec(n, 0.0), info.orientation};
}

}  // namespace detail

struct EntropyScores {
  ScoreVector pe;
  ScoreVector ee;
  ScoreVector mi;
};

/// PE, EE and MI = PE - EE from one pass over the tensor.
inline EntropyScores entropy_scores(const PosteriorLogits& pl) {
  if (pl.models() < 1) {
    throw ConfigError("entropy scores: need at least one model");
  }
  const std::size_t M = pl.models(), B = pl.inputs(), C = pl.classes();
  EntropyScores s{detail::make_score("pe", B), detail::make_score("ee", B), detail::make_score("mi", B)};
  RealVec p(C), mean(C);
  for (std::size_t b = 0; b < B; ++b) {
    std::fill(mean.begin(), mean.end(), 0.0);
    double ee = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      softmax_into(pl.row(m, b), p);
      ee += entropy_unchecked(p);
      for (std::size_t c = 0; c < C; ++c) {
        mean[c] += p[c];
      }
    }
    for (double& x : mean) {
      x /= static_cast<double>(M);
    }
    s.pe.values[b] = entropy_unchecked(mean);
    s.ee.values[b] = ee / static_cast<double>(M);
    s.mi.values[b] = s.pe.values[b] - s.ee.values[b];
  }
  return s;
}

inline ScoreVector predictive_entropy(const PosteriorLogits& pl) { return entropy_scores(pl).pe; }
inline ScoreVector expected_entropy(const PosteriorLogits& pl) { return entropy_scores(pl).ee; }
inline ScoreVector mutual_information(const PosteriorLogits& pl) { return entropy_scores(pl).mi; }

struct LogitDisagreement {
  ScoreVector ds;
  ScoreVector we;
  ScoreVector std_ll;
  ScoreVector kl_shift;
};

/// Disagreement of the truncated logit at the predicted label across posterior samples.
inline LogitDisagreement logit_disagreement_suite(const PosteriorLogits& pl, double epsilon = kDefaultEpsilon) {
  if (!(epsilon > 0.0)) {
    throw ConfigError("logit disagreement: epsilon must be positive");
  }
  if (pl.models() < 2) {
    throw ConfigError("logit disagreement: need at least two posterior samples");
  }
  const std::size_t M = pl.models(), B = pl.inputs();
  LogitDisagreement s{detail::make_score("ds", B), detail::make_score("we", B), detail::make_score("std_ll", B),
                      detail::make_score("kl_shift", B)};
  const PredictiveBatch pred = predictive_distribution(pl);
  const Matrix zmax = max_logit_slice(pl, pred.labels);
  RealVec zstar(M);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t m = 0; m < M; ++m) {
      zstar[m] = truncate_logit(zmax(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(b)), epsilon);
    }
    const NormalizedWeights eta(zstar);
    s.ds.values[b] = disagreement_score(eta);
    s.we.values[b] = weight_entropy(eta);
    s.std_ll.values[b] = std_log_logits(zstar);
    s.kl_shift.values[b] = kl_shift_estimate(eta);
  }
  return s;
}

/// DS on the softmax likelihoods p(y_hat | x, w_m) instead of the truncated logits.
inline ScoreVector softmax_disagreement_score(const PosteriorLogits& pl) {
  if (pl.models() < 2) {
    throw ConfigError("softmax disagreement: need at least two posterior samples");
  }
  const std::size_t M = pl.models(), B = pl.inputs();
  ScoreVector s = detail::make_score("softmax_ds", B);
  const PredictiveBatch pred = predictive_distribution(pl);
  RealVec lik(M);
  for (std::size_t b = 0; b < B; ++b) {
    const auto y = static_cast<std::size_t>(pred.labels[b]);
    for (std::size_t m = 0; m < M; ++m) {
      const auto row = pl.row(m, b);
      // Computed in log space so a vanishing likelihood stays representable.
      lik[m] = std::exp(row[y] - log_sum_exp(row));
    }
    double total = 0.0, sq = 0.0;
    for (double l : lik) {
      total += l;
    }
    for (double l : lik) {
      sq += (l / total) * (l / total);
    }
    s.values[b] = 1.0 / sq;
  }
  return s;
}

/// All requested scores (every registered score when `names` is empty), in registry order.
inline std::vector<ScoreVector> compute_scores(const PosteriorLogits& pl, double epsilon,
                                               const std::vector<std::string>& names = {}) {
  auto wanted = [&](std::string_view n) {
    return names.empty() || std::find(names.begin(), names.end(), n) != names.end();
  };
  for (const auto& n : names) {
    score_info(n);
  }
  std::vector<ScoreVector> out;
  const bool need_entropy = wanted("pe") || wanted("ee") || wanted("mi");
  const bool need_logit = wanted("ds") || wanted("we") || wanted("std_ll") || wanted("kl_shift");
  EntropyScores ent;
  LogitDisagreement ld;
  if (need_entropy) {
    ent = entropy_scores(pl);
  }
  if (need_logit) {
    ld = logit_disagreement_suite(pl, epsilon);
  }
  for (const auto& info : kScores) {
    if (!wanted(info.name)) {
      continue;
    }
    if (info.name == "pe") out.push_back(ent.pe);
    else if (info.name == "ee") out.push_back(ent.ee);
    else if (info.name == "mi") out.push_back(ent.mi);
    else if (info.name == "ds") out.push_back(ld.ds);
    else if (info.name == "we") out.push_back(ld.we);
    else if (info.name == "std_ll") out.push_back(ld.std_ll);
    else if (info.name == "kl_shift") out.push_back(ld.kl_shift);
    else if (info.name == "softmax_ds") out.push_back(softmax_disagreement_score(pl));
  }
  return out;
}

}  // namespace logitds
