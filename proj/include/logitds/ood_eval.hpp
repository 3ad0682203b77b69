#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "logitds/data_io.hpp"
#include "logitds/errors.hpp"
#include "logitds/posterior.hpp"
#include "logitds/rng.hpp"
#include "logitds/scores.hpp"

namespace logitds {

/// In-distribution and OoD values of one score.
struct EvalPair {
  RealVec id_scores;
  RealVec ood_scores;
  std::string score_name;
  Orientation orientation = Orientation::higher_is_ood;
};

/// Flips lower-is-OoD scores so that larger always means "more OoD".
inline EvalPair orient(EvalPair p) {
  if (p.orientation == Orientation::lower_is_ood) {
    for (double& v : p.id_scores) v = -v;
    for (double& v : p.ood_scores) v = -v;
    p.orientation = Orientation::higher_is_ood;
  }
  return p;
}

/// Mann-Whitney AUROC with OoD as the positive class; ties count one half.
/// Uses midranks over the pooled sample.
inline double auroc(const EvalPair& p) {
  if (p.id_scores.empty() || p.ood_scores.empty()) {
    throw ConfigError("auroc: both score sets must be nonempty");
  }
  if (p.orientation != Orientation::higher_is_ood) {
    throw ConfigError("auroc: pair must be oriented first");
  }
  const std::size_t n_id = p.id_scores.size(), n_ood = p.ood_scores.size(), n = n_id + n_ood;
  struct Item {
    double v;
    bool ood;
  };
  std::vector<Item> all;
  all.reserve(n);
  for (double v : p.id_scores) all.push_back({v, false});
  for (double v : p.ood_scores) all.push_back({v, true});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.v < b.v; });

  // Sum of OoD ranks; ranks are 1-based, tied runs get their average rank.
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::size_t ood_in_run = 0;
    while (j < n && all[j].v == all[i].v) {
      ood_in_run += all[j].ood ? 1 : 0;
      ++j;
    }
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += mid * static_cast<double>(ood_in_run);
    i = j;
  }
  const double u = rank_sum - 0.5 * static_cast<double>(n_ood) * static_cast<double>(n_ood + 1);
  return u / (static_cast<double>(n_ood) * static_cast<double>(n_id));
}

/// Fraction of OoD scores at or below the ceil(0.95 n_id)-th smallest iD score.
inline double fnr_at_95_tnr(const EvalPair& p) {
  if (p.orientation != Orientation::higher_is_ood) {
    throw ConfigError("fnr95: pair must be oriented first");
  }
  if (p.id_scores.size() < 20) {
    throw ConfigError("fnr95: need at least 20 in-distribution scores to define the 95% quantile");
  }
  if (p.ood_scores.empty()) {
    throw ConfigError("fnr95: OoD score set is empty");
  }
  RealVec id = p.id_scores;
  std::sort(id.begin(), id.end());
  // ceil(0.95 n) in integers: (95 n + 99) / 100.
  const std::size_t k = (95 * id.size() + 99) / 100;
  const double tau = id[k - 1];
  const auto missed = std::count_if(p.ood_scores.begin(), p.ood_scores.end(), [&](double v) { return v <= tau; });
  return static_cast<double>(missed) / static_cast<double>(p.ood_scores.size());
}

// ---------------------------------------------------------------------------

struct EvalSubsets {
  LabeledDataset id;
  LabeledDataset ood;
  /// Set when a pool held fewer than n items and the subset was clipped.
  std::vector<std::string> warnings;
};

/// min(n, pool size) indices, uniform without replacement, in shuffled order.
inline std::vector<std::size_t> sample_indices(std::size_t pool, std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(pool);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Partial Fisher-Yates: the first n slots end up a uniform sample.
  n = std::min(n, pool);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (pool - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  return idx;
}

inline LabeledDataset sample_subset(const LabeledDataset& pool, std::size_t n, std::uint64_t seed,
                                    std::uint64_t stream, std::vector<std::string>* warnings = nullptr) {
  if (pool.size() == 0) {
    throw DataError("sample_eval_sets: empty pool '" + pool.tag + "'");
  }
  if (n > pool.size() && warnings) {
    warnings->push_back("pool '" + pool.tag + "' has " + std::to_string(pool.size()) + " items; clipped n=" +
                        std::to_string(n));
  }
  Rng rng = derive_stream(seed, StreamTag::eval_sample, {stream});
  return pool.subset(sample_indices(pool.size(), n, rng));
}

inline EvalSubsets sample_eval_sets(const LabeledDataset& id_pool, const LabeledDataset& ood_pool, std::size_t n,
                                    std::uint64_t seed) {
  EvalSubsets out;
  out.id = sample_subset(id_pool, n, seed, 0, &out.warnings);
  out.ood = sample_subset(ood_pool, n, seed, 1, &out.warnings);
  return out;
}

/// Restricts the pool to `label_count` randomly chosen labels, then samples n items from them.
inline LabeledDataset sample_label_stratified(const LabeledDataset& pool, std::size_t label_count, std::size_t n,
                                              std::uint64_t seed, std::uint64_t stream) {
  std::vector<int> present(pool.labels);
  std::sort(present.begin(), present.end());
  present.erase(std::unique(present.begin(), present.end()), present.end());
  Rng rng = derive_stream(seed, StreamTag::eval_sample, {stream, 1});
  const auto chosen_idx = sample_indices(present.size(), label_count, rng);
  std::vector<char> keep(present.empty() ? 0 : static_cast<std::size_t>(present.back()) + 1, 0);
  for (auto i : chosen_idx) keep[static_cast<std::size_t>(present[i])] = 1;
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (keep[static_cast<std::size_t>(pool.labels[i])]) members.push_back(i);
  }
  const LabeledDataset restricted = pool.subset(members);
  return sample_subset(restricted, n, seed, stream);
}

// ---------------------------------------------------------------------------

struct OodRow {
  std::string in_dataset;
  std::string out_dataset;
  std::string score_name;
  double auroc = 0.0;  // percent, 2 decimals
  double fnr95 = 0.0;  // percent, 2 decimals
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
  int models = 0;
  std::uint64_t seed = 0;
};

struct DatasetError {
  std::string dataset;
  std::string message;
};

struct OodReport {
  std::vector<OodRow> rows;
  std::vector<DatasetError> errors;
  std::vector<std::string> warnings;
};

/// Scores of every input of one evaluated dataset.
struct DatasetScores {
  std::string tag;
  bool in_distribution = false;
  std::vector<ScoreVector> scores;
};

struct BenchmarkConfig {
  int models = 500;
  std::size_t n = 5000;
  double epsilon = kDefaultEpsilon;
  std::uint64_t seed = 0;
  std::vector<std::string> scores;  // empty = all registered
  int threads = 1;
};

struct BenchmarkResult {
  OodReport report;
  std::vector<DatasetScores> scores;
};

inline double to_percent(double fraction) { return std::round(fraction * 10000.0) / 100.0; }

/// Samples the evaluation sets, scores every dataset under the same M posterior
/// samples, and emits one row per (OoD dataset, score). A failing OoD dataset is
/// recorded in report.errors and skipped.
inline BenchmarkResult run_benchmark(const VariationalParams& params, const LabeledDataset& id_dataset,
                                     const std::vector<LabeledDataset>& ood_datasets, const BenchmarkConfig& cfg) {
  if (cfg.models < 2) {
    throw ConfigError("run_benchmark: need M >= 2 posterior samples");
  }
  BenchmarkResult out;
  const std::uint64_t posterior_seed = derive_seed(cfg.seed, StreamTag::posterior);

  auto score_dataset = [&](const LabeledDataset& d) {
    const PosteriorLogits pl = sample_posterior_logits(params, d.inputs, cfg.models, posterior_seed, cfg.threads);
    return compute_scores(pl, cfg.epsilon, cfg.scores);
  };

  const LabeledDataset id_sub = sample_subset(id_dataset, cfg.n, cfg.seed, 0, &out.report.warnings);
  out.scores.push_back({id_sub.tag, true, score_dataset(id_sub)});
  const auto& id_scores = out.scores.front().scores;

  for (std::size_t k = 0; k < ood_datasets.size(); ++k) {
    const LabeledDataset& od = ood_datasets[k];
    try {
      const LabeledDataset ood_sub = sample_subset(od, cfg.n, cfg.seed, k + 1, &out.report.warnings);
      DatasetScores ds{ood_sub.tag, false, score_dataset(ood_sub)};
      for (std::size_t s = 0; s < id_scores.size(); ++s) {
        const EvalPair pair = orient({id_scores[s].values, ds.scores[s].values, id_scores[s].name,
                                      id_scores[s].orientation});
        out.report.rows.push_back({id_sub.tag, ood_sub.tag, id_scores[s].name, to_percent(auroc(pair)),
                                   to_percent(fnr_at_95_tnr(pair)), id_sub.size(), ood_sub.size(), cfg.models,
                                   cfg.seed});
      }
      out.scores.push_back(std::move(ds));
    } catch (const std::exception& e) {
      out.report.errors.push_back({od.tag, e.what()});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization.

inline nlohmann::ordered_json to_json(const OodReport& r) {
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    j["rows"].push_back({{"in_dataset", row.in_dataset},
                         {"out_dataset", row.out_dataset},
                         {"score", row.score_name},
                         {"auroc", row.auroc},
                         {"fnr95", row.fnr95},
                         {"n_id", row.n_id},
                         {"n_ood", row.n_ood},
                         {"M", row.models},
                         {"seed", row.seed}});
  }
  j["errors"] = nlohmann::ordered_json::array();
  for (const auto& e : r.errors) {
    j["errors"].push_back({{"dataset", e.dataset}, {"message", e.message}});
  }
  j["warnings"] = r.warnings;
  return j;
}

/// Aligned table: one line per (in, out) pair, AUROC columns then FNR95 columns.
inline std::string format_table(const OodReport& r) {
  std::vector<std::string> names;
  std::vector<std::pair<std::string, std::string>> pairs;
  for (const auto& row : r.rows) {
    if (std::find(names.begin(), names.end(), row.score_name) == names.end()) names.push_back(row.score_name);
    const auto key = std::make_pair(row.in_dataset, row.out_dataset);
    if (std::find(pairs.begin(), pairs.end(), key) == pairs.end()) pairs.push_back(key);
  }
  auto find_row = [&](const auto& key, const std::string& s) -> const OodRow* {
    for (const auto& row : r.rows) {
      if (row.in_dataset == key.first && row.out_dataset == key.second && row.score_name == s) return &row;
    }
    return nullptr;
  };

  std::size_t w_in = 4, w_out = 5;
  for (const auto& [in, out] : pairs) {
    w_in = std::max(w_in, in.size());
    w_out = std::max(w_out, out.size());
  }
  std::size_t w_col = 6;
  for (const auto& s : names) w_col = std::max(w_col, score_info(s).heading.size());

  std::ostringstream os;
  const std::size_t block = names.size() * (w_col + 1);
  os << std::left << std::setw(static_cast<int>(w_in)) << "D_in" << " | " << std::setw(static_cast<int>(w_out))
     << "D_out" << " | " << std::setw(static_cast<int>(block)) << "AUROC" << "| FNR95\n";
  os << std::setw(static_cast<int>(w_in)) << "" << " | " << std::setw(static_cast<int>(w_out)) << "" << " | ";
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& s : names) os << std::right << std::setw(static_cast<int>(w_col)) << score_info(s).heading << ' ';
    if (pass == 0) os << "| ";
  }
  os << '\n';
  for (const auto& key : pairs) {
    os << std::left << std::setw(static_cast<int>(w_in)) << key.first << " | " << std::setw(static_cast<int>(w_out))
       << key.second << " | " << std::right << std::fixed << std::setprecision(2);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& s : names) {
        const OodRow* row = find_row(key, s);
        os << std::setw(static_cast<int>(w_col));
        if (row) {
          os << (pass == 0 ? row->auroc : row->fnr95);
        } else {
          os << "-";
        }
        os << ' ';
      }
      if (pass == 0) os << "| ";
    }
    os << '\n';
  }
  for (const auto& e : r.errors) {
    os << "error: " << e.dataset << ": " << e.message << '\n';
  }
  return os.str();
}

}  // namespace logitds
