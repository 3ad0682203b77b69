#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "logitds/architecture.hpp"
#include "logitds/errors.hpp"
#include "logitds/rng.hpp"
#include "logitds/tensor.hpp"

namespace logitds {

/// Inputs [N x features] with integer labels in [0, class_count).
struct LabeledDataset {
  Matrix inputs;
  std::vector<int> labels;
  int class_count = 0;
  std::string tag;
  Shape sample_shape;

  std::size_t size() const { return labels.size(); }

  LabeledDataset subset(const std::vector<std::size_t>& idx) const {
    LabeledDataset out{Matrix(static_cast<Eigen::Index>(idx.size()), inputs.cols()), {}, class_count, tag,
                       sample_shape};
    out.labels.reserve(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      out.inputs.row(static_cast<Eigen::Index>(k)) = inputs.row(static_cast<Eigen::Index>(idx[k]));
      out.labels.push_back(labels[idx[k]]);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// IDX container: big-endian magic 0x00000801 (labels) / 0x00000803 (images),
// then one uint32 per dimension, then the raw unsigned-byte payload.

enum class IdxErrorKind { io, bad_magic, truncated, dimension_overflow, count_mismatch };

struct IdxError : DataError {
  IdxErrorKind kind;
  IdxError(IdxErrorKind k, const std::string& what) : DataError(what), kind(k) {}
};

struct IdxImages {
  std::size_t count = 0;
  int rows = 0;
  int cols = 0;
  /// [count x rows*cols], raw bytes / 255.
  Matrix pixels;
};

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw IdxError(IdxErrorKind::truncated, path + ": truncated header");
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                              static_cast<char>(v)};
  out.write(b.data(), 4);
}

inline std::ifstream open_idx(const std::filesystem::path& path, std::uint32_t magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IdxError(IdxErrorKind::io, path.string() + ": cannot open");
  }
  const std::uint32_t got = read_be32(in, path.string());
  if (got != magic) {
    throw IdxError(IdxErrorKind::bad_magic, path.string() + ": bad magic number");
  }
  return in;
}

inline std::uintmax_t remaining_bytes(std::ifstream& in) {
  const auto here = in.tellg();
  in.seekg(0, std::ios::end);
  const auto end = in.tellg();
  in.seekg(here);
  return static_cast<std::uintmax_t>(end - here);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;

/// Reads an IDX image file; pixels are scaled to [0, 1] by dividing by 255.
inline IdxImages load_idx_images(const std::filesystem::path& path) {
  std::ifstream in = detail::open_idx(path, kIdxImageMagic);
  const std::uint64_t n = detail::read_be32(in, path.string());
  const std::uint64_t rows = detail::read_be32(in, path.string());
  const std::uint64_t cols = detail::read_be32(in, path.string());
  // Cap each dimension so products cannot overflow and Eigen indices stay positive.
  constexpr std::uint64_t kMaxDim = std::uint64_t{1} << 24;
  if (rows > 65536 || cols > 65536 || n > kMaxDim || rows * cols > kMaxDim) {
    throw IdxError(IdxErrorKind::dimension_overflow, path.string() + ": dimensions too large");
  }
  const std::uint64_t payload = n * rows * cols;
  if (detail::remaining_bytes(in) < payload) {
    throw IdxError(IdxErrorKind::truncated, path.string() + ": payload shorter than header declares");
  }
  IdxImages out{n, static_cast<int>(rows), static_cast<int>(cols),
                Matrix(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(rows * cols))};
  std::vector<unsigned char> buf(payload);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(payload));
  double* dst = out.pixels.data();
  for (std::size_t i = 0; i < buf.size(); ++i) {
    dst[i] = static_cast<double>(buf[i]) / 255.0;
  }
  return out;
}

inline std::vector<int> load_idx_labels(const std::filesystem::path& path) {
  std::ifstream in = detail::open_idx(path, kIdxLabelMagic);
  const std::uint64_t n = detail::read_be32(in, path.string());
  if (detail::remaining_bytes(in) < n) {
    throw IdxError(IdxErrorKind::truncated, path.string() + ": payload shorter than header declares");
  }
  std::vector<unsigned char> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  return std::vector<int>(buf.begin(), buf.end());
}

inline void write_idx_images(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes,
                             std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
  std::ofstream out(path, std::ios::binary);
  detail::write_be32(out, kIdxImageMagic);
  detail::write_be32(out, n);
  detail::write_be32(out, rows);
  detail::write_be32(out, cols);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IdxError(IdxErrorKind::io, path.string() + ": write failed");
  }
}

inline void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  detail::write_be32(out, kIdxLabelMagic);
  detail::write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
  if (!out) {
    throw IdxError(IdxErrorKind::io, path.string() + ": write failed");
  }
}

/// Pairs an image file with its label file. class_count is max(label) + 1 unless given.
inline LabeledDataset load_idx_dataset(const std::filesystem::path& images, const std::filesystem::path& labels,
                                       std::string tag, int class_count = 0) {
  IdxImages img = load_idx_images(images);
  std::vector<int> lab = load_idx_labels(labels);
  if (lab.size() != img.count) {
    throw IdxError(IdxErrorKind::count_mismatch, images.string() + ": " + std::to_string(img.count) +
                                                     " images but " + std::to_string(lab.size()) + " labels");
  }
  int max_label = -1;
  for (int y : lab) {
    max_label = std::max(max_label, y);
  }
  if (class_count == 0) {
    class_count = max_label + 1;
  } else if (max_label >= class_count) {
    throw DataError(labels.string() + ": label exceeds class count");
  }
  return {std::move(img.pixels), std::move(lab), class_count, std::move(tag), Shape{1, img.rows, img.cols}};
}

// ---------------------------------------------------------------------------
// Synthetic 2-D surrogates.

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Isotropic Gaussian blobs, one per center; labels follow center order.
inline LabeledDataset make_gaussian_blobs(const std::vector<Point2>& centers, int n_per_class, double sigma,
                                          std::uint64_t seed, std::string tag = "blobs") {
  for (std::size_t i = 0; i < centers.size(); ++i) {
    for (std::size_t j = i + 1; j < centers.size(); ++j) {
      if (centers[i].x == centers[j].x && centers[i].y == centers[j].y) {
        throw ConfigError("make_gaussian_blobs: centers must be pairwise distinct");
      }
    }
  }
  if (n_per_class < 0 || sigma < 0.0) {
    throw ConfigError("make_gaussian_blobs: n_per_class and sigma must be non-negative");
  }
  const auto classes = static_cast<int>(centers.size());
  LabeledDataset d{Matrix(static_cast<Eigen::Index>(classes) * n_per_class, 2), {}, classes, std::move(tag),
                   Shape{2, 1, 1}};
  Rng rng = derive_stream(seed, StreamTag::synthetic, {1});
  std::normal_distribution<double> unit(0.0, 1.0);
  Eigen::Index row = 0;
  for (int c = 0; c < classes; ++c) {
    for (int k = 0; k < n_per_class; ++k, ++row) {
      d.inputs(row, 0) = centers[static_cast<std::size_t>(c)].x + sigma * unit(rng);
      d.inputs(row, 1) = centers[static_cast<std::size_t>(c)].y + sigma * unit(rng);
      d.labels.push_back(c);
    }
  }
  return d;
}

/// Points uniform on a circle plus isotropic Gaussian noise. Labels are all 0.
inline LabeledDataset make_ring_ood(double radius, int n, double noise_sigma, std::uint64_t seed,
                                    std::string tag = "ring") {
  if (!(radius > 0.0)) {
    throw ConfigError("make_ring_ood: radius must be positive");
  }
  LabeledDataset d{Matrix(n, 2), std::vector<int>(static_cast<std::size_t>(n), 0), 1, std::move(tag), Shape{2, 1, 1}};
  Rng rng = derive_stream(seed, StreamTag::synthetic, {2});
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const double a = angle(rng);
    d.inputs(i, 0) = radius * std::cos(a) + noise_sigma * unit(rng);
    d.inputs(i, 1) = radius * std::sin(a) + noise_sigma * unit(rng);
  }
  return d;
}

}  // namespace logitds
