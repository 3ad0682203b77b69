#pragma once

#include <limits>
#include <span>
#include <vector>

#include "logitds/architecture.hpp"
#include "logitds/core_math.hpp"
#include "logitds/tensor.hpp"

namespace logitds {

// Deterministic forward/backward passes for a concrete weight vector.
// Activations are batch matrices (rows = inputs) with features flattened in
// channel-major (c, y, x) order.

namespace detail {

inline ConstMatrixMap dense_weights(const LayerSpec& l, std::span<const double> w, std::size_t off) {
  return ConstMatrixMap(w.data() + off, l.out, l.in);
}

inline void conv_forward(const LayerSpec& l, const Shape& in, const Shape& out, const double* w,
                         const Matrix& x, Matrix& y) {
  const int k = l.kernel;
  const double* bias = w + static_cast<std::size_t>(l.out) * l.in * k * k;
  y.resize(x.rows(), static_cast<Eigen::Index>(out.size()));
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    const double* src = x.row(b).data();
    double* dst = y.row(b).data();
    for (int oc = 0; oc < out.channels; ++oc) {
      for (int oy = 0; oy < out.height; ++oy) {
        for (int ox = 0; ox < out.width; ++ox) {
          double acc = bias[oc];
          for (int ic = 0; ic < in.channels; ++ic) {
            const double* kern = w + ((static_cast<std::size_t>(oc) * in.channels + ic) * k * k);
            const double* plane = src + static_cast<std::size_t>(ic) * in.height * in.width;
            for (int ky = 0; ky < k; ++ky) {
              const double* row = plane + static_cast<std::size_t>(oy * l.stride + ky) * in.width + ox * l.stride;
              for (int kx = 0; kx < k; ++kx) {
                acc += kern[ky * k + kx] * row[kx];
              }
            }
          }
          dst[(static_cast<std::size_t>(oc) * out.height + oy) * out.width + ox] = acc;
        }
      }
    }
  }
}

inline void conv_backward(const LayerSpec& l, const Shape& in, const Shape& out, const double* w,
                          const Matrix& x, const Matrix& dy, double* gw, Matrix& dx) {
  const int k = l.kernel;
  double* gbias = gw + static_cast<std::size_t>(l.out) * l.in * k * k;
  dx.setZero(x.rows(), x.cols());
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    const double* src = x.row(b).data();
    const double* g = dy.row(b).data();
    double* gsrc = dx.row(b).data();
    for (int oc = 0; oc < out.channels; ++oc) {
      for (int oy = 0; oy < out.height; ++oy) {
        for (int ox = 0; ox < out.width; ++ox) {
          const double go = g[(static_cast<std::size_t>(oc) * out.height + oy) * out.width + ox];
          gbias[oc] += go;
          for (int ic = 0; ic < in.channels; ++ic) {
            const std::size_t koff = (static_cast<std::size_t>(oc) * in.channels + ic) * k * k;
            const std::size_t poff = static_cast<std::size_t>(ic) * in.height * in.width;
            for (int ky = 0; ky < k; ++ky) {
              const std::size_t roff = poff + static_cast<std::size_t>(oy * l.stride + ky) * in.width + ox * l.stride;
              for (int kx = 0; kx < k; ++kx) {
                gw[koff + ky * k + kx] += go * src[roff + kx];
                gsrc[roff + kx] += go * w[koff + ky * k + kx];
              }
            }
          }
        }
      }
    }
  }
}

inline void pool_forward(const LayerSpec& l, const Shape& in, const Shape& out, const Matrix& x, Matrix& y,
                         std::vector<Eigen::Index>* argmax) {
  y.resize(x.rows(), static_cast<Eigen::Index>(out.size()));
  if (argmax) {
    argmax->assign(static_cast<std::size_t>(y.size()), 0);
  }
  for (Eigen::Index b = 0; b < x.rows(); ++b) {
    const double* src = x.row(b).data();
    for (int c = 0; c < out.channels; ++c) {
      for (int oy = 0; oy < out.height; ++oy) {
        for (int ox = 0; ox < out.width; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          Eigen::Index best_idx = 0;
          for (int ky = 0; ky < l.kernel; ++ky) {
            for (int kx = 0; kx < l.kernel; ++kx) {
              const Eigen::Index idx =
                  (static_cast<Eigen::Index>(c) * in.height + oy * l.stride + ky) * in.width + ox * l.stride + kx;
              if (src[idx] > best) {
                best = src[idx];
                best_idx = idx;
              }
            }
          }
          const Eigen::Index o = (static_cast<Eigen::Index>(c) * out.height + oy) * out.width + ox;
          y(b, o) = best;
          if (argmax) {
            (*argmax)[static_cast<std::size_t>(b * y.cols() + o)] = best_idx;
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Per-layer inputs kept by forward_batch for the backward pass.
struct ForwardCache {
  std::vector<Matrix> inputs;
  std::vector<std::vector<Eigen::Index>> pool_argmax;
};

/// Logits [B x C] for a batch under concrete weights `w`.
inline Matrix forward_batch(const Architecture& arch, std::span<const double> w, const Matrix& x,
                            ForwardCache* cache = nullptr) {
  if (w.size() != arch.parameter_count()) {
    throw ConfigError("forward: weight count does not match architecture");
  }
  if (x.cols() != arch.input_size()) {
    throw ConfigError("forward: input has " + std::to_string(x.cols()) + " features, architecture expects " +
                      std::to_string(arch.input_size()));
  }
  const auto& layers = arch.layers();
  const auto& shapes = arch.shapes();
  if (cache) {
    cache->inputs.assign(layers.size(), Matrix());
    cache->pool_argmax.assign(layers.size(), {});
  }
  Matrix cur = x;
  Matrix next;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    const std::size_t off = arch.offsets()[i];
    switch (l.kind) {
      case LayerKind::dense: {
        const auto W = detail::dense_weights(l, w, off);
        const Eigen::Map<const Eigen::RowVectorXd> bias(w.data() + off + static_cast<std::size_t>(l.out) * l.in,
                                                        l.out);
        next.noalias() = cur * W.transpose();
        next.rowwise() += bias;
        break;
      }
      case LayerKind::conv2d:
        detail::conv_forward(l, shapes[i], shapes[i + 1], w.data() + off, cur, next);
        break;
      case LayerKind::maxpool:
        detail::pool_forward(l, shapes[i], shapes[i + 1], cur, next, cache ? &cache->pool_argmax[i] : nullptr);
        break;
      case LayerKind::softplus:
        next = cur.unaryExpr([](double v) { return softplus(v); });
        break;
    }
    if (cache) {
      cache->inputs[i] = std::move(cur);
    }
    cur.swap(next);
  }
  return cur;
}

/// Accumulates d(loss)/d(w) into `grad_w` given d(loss)/d(logits). Requires the cache of
/// the matching forward_batch call.
inline void backward_batch(const Architecture& arch, std::span<const double> w, const ForwardCache& cache,
                           const Matrix& dlogits, std::span<double> grad_w) {
  const auto& layers = arch.layers();
  const auto& shapes = arch.shapes();
  Matrix grad = dlogits;
  Matrix prev;
  for (std::size_t r = layers.size(); r-- > 0;) {
    const LayerSpec& l = layers[r];
    const std::size_t off = arch.offsets()[r];
    const Matrix& in = cache.inputs[r];
    switch (l.kind) {
      case LayerKind::dense: {
        MatrixMap gW(grad_w.data() + off, l.out, l.in);
        Eigen::Map<Eigen::RowVectorXd> gb(grad_w.data() + off + static_cast<std::size_t>(l.out) * l.in, l.out);
        gW.noalias() += grad.transpose() * in;
        gb += grad.colwise().sum();
        if (r > 0) {
          prev.noalias() = grad * detail::dense_weights(l, w, off);
        }
        break;
      }
      case LayerKind::conv2d:
        detail::conv_backward(l, shapes[r], shapes[r + 1], w.data() + off, in, grad, grad_w.data() + off, prev);
        break;
      case LayerKind::maxpool: {
        prev.setZero(in.rows(), in.cols());
        const auto& am = cache.pool_argmax[r];
        for (Eigen::Index b = 0; b < grad.rows(); ++b) {
          for (Eigen::Index o = 0; o < grad.cols(); ++o) {
            prev(b, am[static_cast<std::size_t>(b * grad.cols() + o)]) += grad(b, o);
          }
        }
        break;
      }
      case LayerKind::softplus:
        prev = grad.cwiseProduct(in.unaryExpr([](double v) { return sigmoid(v); }));
        break;
    }
    grad.swap(prev);
  }
}

}  // namespace logitds
