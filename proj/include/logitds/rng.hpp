#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace logitds {

using Rng = std::mt19937_64;

/// Stream tags keep the sub-streams of one seed apart.
enum class StreamTag : std::uint32_t {
  init = 1,
  train_noise = 2,
  shuffle = 3,
  split = 4,
  validation = 5,
  posterior = 6,
  eval_sample = 7,
  synthetic = 8,
};

/// Deterministic stream derived from (seed, tag, indices...). Independent of call order.
inline Rng derive_stream(std::uint64_t seed, StreamTag tag, std::initializer_list<std::uint64_t> idx = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(3 + 2 * idx.size());
  words.push_back(static_cast<std::uint32_t>(seed));
  words.push_back(static_cast<std::uint32_t>(seed >> 32));
  words.push_back(static_cast<std::uint32_t>(tag));
  for (auto i : idx) {
    words.push_back(static_cast<std::uint32_t>(i));
    words.push_back(static_cast<std::uint32_t>(i >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// Scalar seed for APIs that take a seed rather than a stream.
inline std::uint64_t derive_seed(std::uint64_t seed, StreamTag tag, std::initializer_list<std::uint64_t> idx = {}) {
  return derive_stream(seed, tag, idx)();
}

/// Fisher-Yates shuffle. Modulo bias is below 2^-40 for any realistic size.
template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[static_cast<std::size_t>(rng() % i)]);
  }
}

}  // namespace logitds
