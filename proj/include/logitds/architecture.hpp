#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "logitds/errors.hpp"

namespace logitds {

enum class LayerKind { dense, conv2d, maxpool, softplus };

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::softplus: return "softplus";
  }
  return "?";
}

/// Channels x height x width. Flat feature vectors use {n, 1, 1}.
struct Shape {
  int channels = 1;
  int height = 1;
  int width = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  bool operator==(const Shape&) const = default;
};

/// One layer. For dense, `in`/`out` are feature counts; for conv2d they are channel counts.
struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  int in = 0;
  int out = 0;
  int kernel = 0;
  int stride = 1;

  static LayerSpec dense(int in, int out) { return {LayerKind::dense, in, out, 0, 1}; }
  static LayerSpec conv2d(int in_channels, int out_channels, int kernel, int stride = 1) {
    return {LayerKind::conv2d, in_channels, out_channels, kernel, stride};
  }
  static LayerSpec maxpool(int kernel, int stride) { return {LayerKind::maxpool, 0, 0, kernel, stride}; }
  static LayerSpec softplus() { return {LayerKind::softplus, 0, 0, 0, 1}; }

  bool operator==(const LayerSpec&) const = default;
};

/// Layer list plus the input shape, with derived shapes and parameter offsets.
class Architecture {
 public:
  Architecture() = default;

  /// Throws ConfigError if the layer dimensions do not chain.
  Architecture(Shape input, std::vector<LayerSpec> layers) : input_(input), layers_(std::move(layers)) {
    validate();
  }

  const Shape& input_shape() const { return input_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  /// Shape entering layer i; shapes()[layers().size()] is the output.
  const std::vector<Shape>& shapes() const { return shapes_; }
  /// Offset of layer i's weights in the flat parameter vector; biases follow the weights.
  const std::vector<std::size_t>& offsets() const { return offsets_; }
  std::size_t parameter_count() const { return parameter_count_; }
  int input_size() const { return static_cast<int>(input_.size()); }
  int class_count() const { return static_cast<int>(shapes_.back().size()); }

  bool operator==(const Architecture& o) const { return input_ == o.input_ && layers_ == o.layers_; }

  /// Dense stack in -> hidden... -> classes with Softplus between layers.
  static Architecture mlp(int in, const std::vector<int>& hidden, int classes) {
    std::vector<LayerSpec> layers;
    int prev = in;
    for (int h : hidden) {
      layers.push_back(LayerSpec::dense(prev, h));
      layers.push_back(LayerSpec::softplus());
      prev = h;
    }
    layers.push_back(LayerSpec::dense(prev, classes));
    return Architecture({in, 1, 1}, std::move(layers));
  }

  /// LeNet-5 layout for 1x28x28 inputs.
  static Architecture lenet5(int classes = 10) {
    return Architecture({1, 28, 28}, {
                                         LayerSpec::conv2d(1, 6, 5),
                                         LayerSpec::softplus(),
                                         LayerSpec::maxpool(2, 2),
                                         LayerSpec::conv2d(6, 16, 5),
                                         LayerSpec::softplus(),
                                         LayerSpec::maxpool(2, 2),
                                         LayerSpec::dense(16 * 4 * 4, 120),
                                         LayerSpec::softplus(),
                                         LayerSpec::dense(120, 84),
                                         LayerSpec::softplus(),
                                         LayerSpec::dense(84, classes),
                                     });
  }

 private:
  void validate() {
    if (input_.channels <= 0 || input_.height <= 0 || input_.width <= 0) {
      throw ConfigError("architecture: input shape must be positive");
    }
    if (layers_.empty() || layers_.back().kind != LayerKind::dense) {
      throw ConfigError("architecture: final layer must be dense");
    }
    shapes_.assign(1, input_);
    offsets_.clear();
    parameter_count_ = 0;
    Shape cur = input_;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const LayerSpec& l = layers_[i];
      offsets_.push_back(parameter_count_);
      const std::string where = "architecture: layer " + std::to_string(i) + " (" + std::string(to_string(l.kind)) + ")";
      switch (l.kind) {
        case LayerKind::dense:
          if (l.in <= 0 || l.out <= 0 || static_cast<std::size_t>(l.in) != cur.size()) {
            throw ConfigError(where + ": expects " + std::to_string(l.in) + " inputs, got " +
                              std::to_string(cur.size()));
          }
          parameter_count_ += static_cast<std::size_t>(l.out) * (static_cast<std::size_t>(l.in) + 1);
          cur = {l.out, 1, 1};
          break;
        case LayerKind::conv2d: {
          if (l.in != cur.channels || l.out <= 0 || l.kernel <= 0 || l.stride <= 0 ||
              l.kernel > cur.height || l.kernel > cur.width) {
            throw ConfigError(where + ": inconsistent channels or kernel");
          }
          const std::size_t k2 = static_cast<std::size_t>(l.kernel) * static_cast<std::size_t>(l.kernel);
          parameter_count_ += static_cast<std::size_t>(l.out) * (static_cast<std::size_t>(l.in) * k2 + 1);
          cur = {l.out, (cur.height - l.kernel) / l.stride + 1, (cur.width - l.kernel) / l.stride + 1};
          break;
        }
        case LayerKind::maxpool:
          if (l.kernel <= 0 || l.stride <= 0 || l.kernel > cur.height || l.kernel > cur.width) {
            throw ConfigError(where + ": kernel larger than input");
          }
          cur = {cur.channels, (cur.height - l.kernel) / l.stride + 1, (cur.width - l.kernel) / l.stride + 1};
          break;
        case LayerKind::softplus:
          break;
      }
      shapes_.push_back(cur);
    }
  }

  Shape input_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape> shapes_;
  std::vector<std::size_t> offsets_;
  std::size_t parameter_count_ = 0;
};

}  // namespace logitds
