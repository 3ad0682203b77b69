#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "logitds/errors.hpp"
#include "logitds/variational_net.hpp"

namespace logitds {

// Checkpoint container, all integers and reals little-endian:
//
//   char[8]  magic "LDSCKPT1"
//   u64      config hash (FNV-1a 64 of the metadata text)
//   f64      prior variance
//   u32 x3   input shape (channels, height, width)
//   u32      layer count, then per layer u32 x5 (kind, in, out, kernel, stride)
//   u64      parameter count P
//   f64 x P  mu
//   f64 x P  rho
//   u32      metadata length L, then L bytes of metadata (JSON text)

inline constexpr std::string_view kCheckpointMagic = "LDSCKPT1";

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct Checkpoint {
  VariationalParams params;
  /// Effective run configuration (JSON text) the checkpoint was produced under.
  std::string metadata;

  std::uint64_t config_hash() const { return fnv1a64(metadata); }
  bool operator==(const Checkpoint&) const = default;
};

namespace detail {

class LeWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      buf_.push_back(static_cast<char>(v >> (8 * i)));
    }
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      buf_.push_back(static_cast<char>(v >> (8 * i)));
    }
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { buf_.append(s); }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class LeReader {
 public:
  explicit LeReader(std::string data) : data_(std::move(data)) {}

  std::uint32_t u32() { return static_cast<std::uint32_t>(take(4)); }
  std::uint64_t u64() { return take(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) {
      throw DataError("checkpoint: truncated file");
    }
  }
  std::uint64_t take(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) {
      v |= std::uint64_t{static_cast<unsigned char>(data_[pos_ + static_cast<std::size_t>(i)])} << (8 * i);
    }
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  const VariationalParams& p = ck.params;
  p.check();
  detail::LeWriter w;
  w.bytes(kCheckpointMagic);
  w.u64(ck.config_hash());
  w.f64(p.prior_variance);
  const Shape& in = p.arch.input_shape();
  w.u32(static_cast<std::uint32_t>(in.channels));
  w.u32(static_cast<std::uint32_t>(in.height));
  w.u32(static_cast<std::uint32_t>(in.width));
  w.u32(static_cast<std::uint32_t>(p.arch.layers().size()));
  for (const LayerSpec& l : p.arch.layers()) {
    w.u32(static_cast<std::uint32_t>(l.kind));
    w.u32(static_cast<std::uint32_t>(l.in));
    w.u32(static_cast<std::uint32_t>(l.out));
    w.u32(static_cast<std::uint32_t>(l.kernel));
    w.u32(static_cast<std::uint32_t>(l.stride));
  }
  w.u64(p.size());
  for (double m : p.mu) {
    w.f64(m);
  }
  for (double r : p.rho) {
    w.f64(r);
  }
  w.u32(static_cast<std::uint32_t>(ck.metadata.size()));
  w.bytes(ck.metadata);
  return w.str();
}

inline Checkpoint decode_checkpoint(std::string data) {
  detail::LeReader r(std::move(data));
  if (r.bytes(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw DataError("checkpoint: bad magic");
  }
  const std::uint64_t hash = r.u64();
  Checkpoint ck;
  ck.params.prior_variance = r.f64();
  Shape in;
  in.channels = static_cast<int>(r.u32());
  in.height = static_cast<int>(r.u32());
  in.width = static_cast<int>(r.u32());
  const std::uint32_t n_layers = r.u32();
  if (n_layers > 4096) {
    throw DataError("checkpoint: implausible layer count");
  }
  std::vector<LayerSpec> layers;
  for (std::uint32_t i = 0; i < n_layers; ++i) {
    LayerSpec l;
    const std::uint32_t kind = r.u32();
    if (kind > static_cast<std::uint32_t>(LayerKind::softplus)) {
      throw DataError("checkpoint: unknown layer kind");
    }
    l.kind = static_cast<LayerKind>(kind);
    l.in = static_cast<int>(r.u32());
    l.out = static_cast<int>(r.u32());
    l.kernel = static_cast<int>(r.u32());
    l.stride = static_cast<int>(r.u32());
    layers.push_back(l);
  }
  try {
    ck.params.arch = Architecture(in, std::move(layers));
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint: ") + e.what());
  }
  const std::uint64_t n = r.u64();
  if (n != ck.params.arch.parameter_count() || r.remaining() < 16 * n) {
    throw DataError("checkpoint: parameter count does not match architecture");
  }
  ck.params.mu.resize(n);
  ck.params.rho.resize(n);
  for (double& m : ck.params.mu) {
    m = r.f64();
  }
  for (double& x : ck.params.rho) {
    x = r.f64();
  }
  ck.metadata = r.bytes(r.u32());
  if (ck.config_hash() != hash) {
    throw DataError("checkpoint: config hash does not match metadata");
  }
  ck.params.check();
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const std::string bytes = encode_checkpoint(ck);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw DataError("checkpoint: cannot write " + path.string());
  }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("checkpoint: cannot open " + path.string());
  }
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(std::move(data));
}

}  // namespace logitds
