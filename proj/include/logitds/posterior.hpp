#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <thread>
#include <vector>

#include "logitds/core_math.hpp"
#include "logitds/errors.hpp"
#include "logitds/rng.hpp"
#include "logitds/tensor.hpp"
#include "logitds/variational_net.hpp"

namespace logitds {

/// Logits of M posterior samples on B inputs over C classes, stored [m][b][c] row-major.
class PosteriorLogits {
 public:
  PosteriorLogits() = default;
  PosteriorLogits(std::size_t models, std::size_t inputs, std::size_t classes)
      : m_(models), b_(inputs), c_(classes), data_(models * inputs * classes, 0.0) {}
  PosteriorLogits(std::size_t models, std::size_t inputs, std::size_t classes, std::vector<double> data)
      : m_(models), b_(inputs), c_(classes), data_(std::move(data)) {
    if (data_.size() != m_ * b_ * c_) {
      throw ConfigError("posterior logits: data size does not match M x B x C");
    }
  }

  std::size_t models() const { return m_; }
  std::size_t inputs() const { return b_; }
  std::size_t classes() const { return c_; }

  double& at(std::size_t m, std::size_t b, std::size_t c) { return data_[(m * b_ + b) * c_ + c]; }
  double at(std::size_t m, std::size_t b, std::size_t c) const { return data_[(m * b_ + b) * c_ + c]; }

  std::span<const double> row(std::size_t m, std::size_t b) const { return {data_.data() + (m * b_ + b) * c_, c_}; }
  std::span<double> row(std::size_t m, std::size_t b) { return {data_.data() + (m * b_ + b) * c_, c_}; }

  const std::vector<double>& data() const { return data_; }

  bool operator==(const PosteriorLogits&) const = default;

 private:
  std::size_t m_ = 0;
  std::size_t b_ = 0;
  std::size_t c_ = 0;
  std::vector<double> data_;
};

struct PredictiveBatch {
  Matrix probs;             // [B x C] mean softmax
  std::vector<int> labels;  // argmax, lowest index on ties
};

/// Sample m uses the stream derived from (seed, m), so any split of the M axis across
/// threads gives the same tensor.
inline PosteriorLogits sample_posterior_logits(const VariationalParams& params, const Matrix& inputs, int models,
                                               std::uint64_t seed, int threads = 1) {
  if (models < 1) {
    throw ConfigError("sample_posterior_logits: M must be >= 1");
  }
  params.check();
  if (inputs.cols() != params.arch.input_size()) {
    throw ConfigError("sample_posterior_logits: input has " + std::to_string(inputs.cols()) +
                      " features, architecture expects " + std::to_string(params.arch.input_size()));
  }
  const auto B = static_cast<std::size_t>(inputs.rows());
  const auto C = static_cast<std::size_t>(params.arch.class_count());
  PosteriorLogits out(static_cast<std::size_t>(models), B, C);

  auto work = [&](int first, int last) {
    for (int m = first; m < last; ++m) {
      Rng rng = derive_stream(seed, StreamTag::posterior, {static_cast<std::uint64_t>(m)});
      const WeightSample w = sample_weights(params, rng);
      const Matrix z = forward(w, inputs);
      std::copy(z.data(), z.data() + z.size(), out.row(static_cast<std::size_t>(m), 0).data());
    }
  };

  threads = std::max(1, std::min(threads, models));
  if (threads == 1) {
    work(0, models);
  } else {
    std::vector<std::jthread> pool;
    const int chunk = (models + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const int first = t * chunk;
      const int last = std::min(models, first + chunk);
      if (first < last) {
        pool.emplace_back(work, first, last);
      }
    }
  }
  return out;
}

inline PredictiveBatch predictive_distribution(const PosteriorLogits& pl) {
  if (pl.models() < 1) {
    throw ConfigError("predictive_distribution: need at least one model");
  }
  const std::size_t M = pl.models(), B = pl.inputs(), C = pl.classes();
  PredictiveBatch out{Matrix::Zero(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(C)), std::vector<int>(B)};
  RealVec p(C);
  for (std::size_t b = 0; b < B; ++b) {
    double* row = out.probs.row(static_cast<Eigen::Index>(b)).data();
    for (std::size_t m = 0; m < M; ++m) {
      softmax_into(pl.row(m, b), p);
      for (std::size_t c = 0; c < C; ++c) {
        row[c] += p[c];
      }
    }
    for (std::size_t c = 0; c < C; ++c) {
      row[c] /= static_cast<double>(M);
    }
    out.labels[b] = static_cast<int>(argmax(std::span<const double>(row, C)));
  }
  return out;
}

/// out(m, b) = logit of class labels[b] under model m.
inline Matrix max_logit_slice(const PosteriorLogits& pl, std::span<const int> labels) {
  if (labels.size() != pl.inputs()) {
    throw ConfigError("max_logit_slice: need one label per input");
  }
  Matrix out(static_cast<Eigen::Index>(pl.models()), static_cast<Eigen::Index>(pl.inputs()));
  for (std::size_t b = 0; b < pl.inputs(); ++b) {
    const int y = labels[b];
    if (y < 0 || static_cast<std::size_t>(y) >= pl.classes()) {
      throw ConfigError("max_logit_slice: label " + std::to_string(y) + " out of range");
    }
    for (std::size_t m = 0; m < pl.models(); ++m) {
      out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(b)) = pl.at(m, b, static_cast<std::size_t>(y));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tensor dump: u32 M, u32 B, u32 C (big-endian), then M*B*C IEEE-754 binary64
// values in [m][b][c] order, each big-endian.

inline void save_posterior_logits(const std::filesystem::path& path, const PosteriorLogits& pl) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  auto put = [&](std::uint64_t v, int bytes) {
    for (int i = bytes - 1; i >= 0; --i) {
      out.put(static_cast<char>(v >> (8 * i)));
    }
  };
  put(pl.models(), 4);
  put(pl.inputs(), 4);
  put(pl.classes(), 4);
  for (double v : pl.data()) {
    put(std::bit_cast<std::uint64_t>(v), 8);
  }
  if (!out) {
    throw DataError("posterior dump: cannot write " + path.string());
  }
}

inline PosteriorLogits load_posterior_logits(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("posterior dump: cannot open " + path.string());
  }
  auto get = [&](int bytes) {
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      const int ch = in.get();
      if (ch == std::char_traits<char>::eof()) {
        throw DataError("posterior dump: truncated " + path.string());
      }
      v = (v << 8) | static_cast<std::uint64_t>(ch);
    }
    return v;
  };
  const std::size_t M = get(4), B = get(4), C = get(4);
  if (M * B * C > (std::size_t{1} << 32)) {
    throw DataError("posterior dump: tensor too large");
  }
  std::vector<double> data(M * B * C);
  for (double& v : data) {
    v = std::bit_cast<double>(get(8));
    if (!std::isfinite(v)) {
      throw DataError("posterior dump: non-finite logit");
    }
  }
  return PosteriorLogits(M, B, C, std::move(data));
}

}  // namespace logitds
