/* Copyright 2026 The et-desk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <Eigen/Core>
#include <cmath>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "et/errors.hpp"
#include "et/tensor.hpp"

namespace et {

enum class Activation { kNone, kLeakyRelu };

inline constexpr double kLeakySlope = 0.1;

/// One convolution layer. Padding is kernel / 2 ("same" for odd kernels).
struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  Activation activation = Activation::kLeakyRelu;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// A named chain of convolutions; parameters live under "<name>.<i>.weight"
/// ([out, in, k, k]) and "<name>.<i>.bias" ([out]).
struct StackSpec {
  std::string name;
  std::vector<ConvSpec> layers;

  std::string weight_name(std::size_t i) const { return name + "." + std::to_string(i) + ".weight"; }
  std::string bias_name(std::size_t i) const { return name + "." + std::to_string(i) + ".bias"; }
  /// Output spatial size for an input of size `in` (square).
  int output_size(int in) const;

  friend bool operator==(const StackSpec&, const StackSpec&) = default;
};

inline int conv_output_size(int in, const ConvSpec& c) {
  const int pad = c.kernel / 2;
  return (in + 2 * pad - c.kernel) / c.stride + 1;
}

inline int StackSpec::output_size(int in) const {
  for (const auto& c : layers) in = conv_output_size(in, c);
  return in;
}

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using ColMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
struct ConvCache {
  ColMatrix<Scalar> cols;  // (in * k * k) x (out_h * out_w)
  Index in_h = 0, in_w = 0;
  Tensor<Scalar> output;  // post-activation [out, out_h, out_w]
};

/// Saved activations of one forward pass through a stack. Backward may run
/// exactly once per record.
template <typename Scalar>
struct StackRecord {
  std::vector<ConvCache<Scalar>> layers;
  bool consumed = false;

  const Tensor<Scalar>& output() const { return layers.back().output; }
  const Tensor<Scalar>& layer_output(std::size_t i) const { return layers.at(i).output; }
};

template <typename Scalar>
struct StackGradients {
  ParamSet<Scalar> params;
  Tensor<Scalar> input;
};

namespace detail {

template <typename Scalar>
void im2col(const Tensor<Scalar>& in, const ConvSpec& c, int out_h, int out_w,
            ColMatrix<Scalar>& cols) {
  const Index channels = in.dim(0), h = in.dim(1), w = in.dim(2);
  const int k = c.kernel, pad = k / 2, s = c.stride;
  cols.resize(channels * k * k, static_cast<Index>(out_h) * out_w);
  for (Index ch = 0; ch < channels; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Index row = (ch * k + ky) * k + kx;
        for (int oy = 0; oy < out_h; ++oy) {
          const Index iy = static_cast<Index>(oy) * s + ky - pad;
          for (int ox = 0; ox < out_w; ++ox) {
            const Index ix = static_cast<Index>(ox) * s + kx - pad;
            const bool inside = iy >= 0 && iy < h && ix >= 0 && ix < w;
            cols(row, static_cast<Index>(oy) * out_w + ox) = inside ? in.at(ch, iy, ix) : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im(const ColMatrix<Scalar>& dcols, const ConvSpec& c, Index h, Index w, int out_h,
            int out_w, Tensor<Scalar>& din) {
  const int k = c.kernel, pad = k / 2, s = c.stride;
  for (Index ch = 0; ch < c.in_channels; ++ch) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const Index row = (ch * k + ky) * k + kx;
        for (int oy = 0; oy < out_h; ++oy) {
          const Index iy = static_cast<Index>(oy) * s + ky - pad;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < out_w; ++ox) {
            const Index ix = static_cast<Index>(ox) * s + kx - pad;
            if (ix < 0 || ix >= w) continue;
            din.at(ch, iy, ix) += dcols(row, static_cast<Index>(oy) * out_w + ox);
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Runs `input` ([C, H, W]) through every layer of `spec`.
template <typename Scalar>
StackRecord<Scalar> forward(const ParamSet<Scalar>& params, const StackSpec& spec,
                            const Tensor<Scalar>& input) {
  StackRecord<Scalar> rec;
  rec.layers.resize(spec.layers.size());
  const Tensor<Scalar>* x = &input;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const ConvSpec& c = spec.layers[i];
    if (x->rank() != 3 || x->dim(0) != c.in_channels) {
      throw ConfigError(spec.name + " layer " + std::to_string(i) + ": expected " +
                        std::to_string(c.in_channels) + " input channels, got shape " +
                        shape_string(x->shape()));
    }
    const auto& wt = params.at(spec.weight_name(i));
    const auto& bt = params.at(spec.bias_name(i));
    const Index kk = static_cast<Index>(c.in_channels) * c.kernel * c.kernel;
    if (wt.size() != c.out_channels * kk || bt.size() != c.out_channels) {
      throw ConfigError(spec.name + " layer " + std::to_string(i) + ": parameter shape mismatch");
    }
    auto& cache = rec.layers[i];
    cache.in_h = x->dim(1);
    cache.in_w = x->dim(2);
    const int out_h = conv_output_size(static_cast<int>(cache.in_h), c);
    const int out_w = conv_output_size(static_cast<int>(cache.in_w), c);
    detail::im2col(*x, c, out_h, out_w, cache.cols);

    cache.output = Tensor<Scalar>({c.out_channels, out_h, out_w});
    Eigen::Map<const RowMatrix<Scalar>> weight(wt.ptr(), c.out_channels, kk);
    Eigen::Map<RowMatrix<Scalar>> out(cache.output.ptr(), c.out_channels,
                                      static_cast<Index>(out_h) * out_w);
    out.noalias() = weight * cache.cols;
    out.colwise() += bt.data();
    if (c.activation == Activation::kLeakyRelu) {
      auto& d = cache.output.data();
      d = d.unaryExpr([](Scalar v) { return v > Scalar(0) ? v : Scalar(kLeakySlope) * v; });
    }
    cache.output.check_finite(spec.name + " forward");
    x = &cache.output;
  }
  return rec;
}

/// Accumulates parameter gradients into `grads` (must already hold zero or
/// partial sums with matching names) and returns the input gradient.
/// `upstream[i]` is the gradient arriving at layer i's output from outside the
/// stack (empty tensor when none); the last entry is typically the loss path.
template <typename Scalar>
Tensor<Scalar> backward_accumulate(StackRecord<Scalar>& rec, const ParamSet<Scalar>& params,
                                   const StackSpec& spec,
                                   std::span<const Tensor<Scalar>> upstream,
                                   ParamSet<Scalar>& grads) {
  if (rec.consumed) throw UsageError("backward called twice on one forward record (" + spec.name + ")");
  if (upstream.size() != spec.layers.size()) {
    throw UsageError("backward expects one upstream slot per layer of " + spec.name);
  }
  rec.consumed = true;

  Tensor<Scalar> grad;  // gradient w.r.t. the current layer's output
  for (std::size_t li = spec.layers.size(); li-- > 0;) {
    const ConvSpec& c = spec.layers[li];
    auto& cache = rec.layers[li];
    if (grad.empty()) grad = Tensor<Scalar>(cache.output.shape());
    if (!upstream[li].empty()) {
      if (!upstream[li].same_shape(cache.output)) {
        throw UsageError(spec.name + " layer " + std::to_string(li) + ": upstream shape " +
                         shape_string(upstream[li].shape()) + " != output shape " +
                         shape_string(cache.output.shape()));
      }
      grad.data() += upstream[li].data();
    }
    if (c.activation == Activation::kLeakyRelu) {
      grad.data().array() *= cache.output.data().array().unaryExpr(
          [](Scalar y) { return y > Scalar(0) ? Scalar(1) : Scalar(kLeakySlope); });
    }
    const Index kk = static_cast<Index>(c.in_channels) * c.kernel * c.kernel;
    const int out_h = static_cast<int>(cache.output.dim(1));
    const int out_w = static_cast<int>(cache.output.dim(2));
    Eigen::Map<const RowMatrix<Scalar>> dout(grad.ptr(), c.out_channels,
                                             static_cast<Index>(out_h) * out_w);
    auto& gw = grads.at(spec.weight_name(li));
    auto& gb = grads.at(spec.bias_name(li));
    Eigen::Map<RowMatrix<Scalar>> dweight(gw.ptr(), c.out_channels, kk);
    dweight.noalias() += dout * cache.cols.transpose();
    gb.data() += dout.rowwise().sum();

    const auto& wt = params.at(spec.weight_name(li));
    Eigen::Map<const RowMatrix<Scalar>> weight(wt.ptr(), c.out_channels, kk);
    ColMatrix<Scalar> dcols = weight.transpose() * dout;
    Tensor<Scalar> din({c.in_channels, cache.in_h, cache.in_w});
    detail::col2im(dcols, c, cache.in_h, cache.in_w, out_h, out_w, din);
    din.check_finite(spec.name + " backward");
    grad = std::move(din);
    cache.cols.resize(0, 0);
  }
  return grad;
}

/// Fresh-gradient form of backward for a single upstream at the stack output.
template <typename Scalar>
StackGradients<Scalar> backward(StackRecord<Scalar>& rec, const ParamSet<Scalar>& params,
                                const StackSpec& spec, const Tensor<Scalar>& upstream) {
  StackGradients<Scalar> g;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    g.params.emplace(spec.weight_name(i), Tensor<Scalar>(params.at(spec.weight_name(i)).shape()));
    g.params.emplace(spec.bias_name(i), Tensor<Scalar>(params.at(spec.bias_name(i)).shape()));
  }
  std::vector<Tensor<Scalar>> ups(spec.layers.size());
  ups.back() = upstream;
  g.input = backward_accumulate<Scalar>(rec, params, spec, ups, g.params);
  return g;
}

/// Adds zero-initialized tensors for every parameter of `spec` into `params`.
template <typename Scalar>
void add_zero_params(const StackSpec& spec, ParamSet<Scalar>& params) {
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& c = spec.layers[i];
    params[spec.weight_name(i)] = Tensor<Scalar>({c.out_channels, c.in_channels, c.kernel, c.kernel});
    params[spec.bias_name(i)] = Tensor<Scalar>({c.out_channels});
  }
}

/// Seeded uniform fan-in initialization: bound sqrt(6 / fan_in) ahead of a
/// leaky ReLU, sqrt(1 / fan_in) for linear outputs. Biases start at zero.
template <typename Scalar>
void init_params(const StackSpec& spec, ParamSet<Scalar>& params, std::mt19937_64& rng) {
  add_zero_params(spec, params);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& c = spec.layers[i];
    const double fan_in = static_cast<double>(c.in_channels) * c.kernel * c.kernel;
    const double bound =
        c.activation == Activation::kLeakyRelu ? std::sqrt(6.0 / fan_in) : std::sqrt(1.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    auto& w = params[spec.weight_name(i)];
    for (Index j = 0; j < w.size(); ++j) w[j] = static_cast<Scalar>(dist(rng));
  }
}

// Dense layer y = W x + b on flat vectors.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dense_forward(
    const Eigen::Ref<const ColMatrix<Scalar>>& weight,
    const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& bias,
    const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& x) {
  return weight * x + bias;
}

template <typename Scalar>
struct DenseGradients {
  ColMatrix<Scalar> weight;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> bias;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> input;
};

template <typename Scalar>
DenseGradients<Scalar> dense_backward(
    const Eigen::Ref<const ColMatrix<Scalar>>& weight,
    const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& x,
    const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& upstream) {
  return {upstream * x.transpose(), upstream, weight.transpose() * upstream};
}

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
  using S = typename Derived::Scalar;
  return x.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Gradient reversal: identity forward, -lambda * upstream backward.
template <typename Scalar>
const Tensor<Scalar>& grl_forward(const Tensor<Scalar>& x) {
  return x;
}

template <typename Scalar>
Tensor<Scalar> grl_backward(const Tensor<Scalar>& upstream, double lambda) {
  return Tensor<Scalar>(upstream.shape(), (-static_cast<Scalar>(lambda)) * upstream.data());
}

/// teacher <- m * teacher + (1 - m) * student, parameter by parameter.
template <typename Scalar>
void ema_update_inplace(ParamSet<Scalar>& teacher, const ParamSet<Scalar>& student, double m) {
  if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("EMA rate must lie in [0, 1]");
  check_same_structure(teacher, student, "ema_update");
  const Scalar keep = static_cast<Scalar>(m);
  const Scalar take = static_cast<Scalar>(1.0 - m);
  for (auto& [name, t] : teacher) t.data() = keep * t.data() + take * student.at(name).data();
}

template <typename Scalar>
ParamSet<Scalar> ema_update(ParamSet<Scalar> teacher, const ParamSet<Scalar>& student, double m) {
  ema_update_inplace(teacher, student, m);
  return teacher;
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`
/// (no-op when max_norm <= 0). Returns the norm before scaling.
template <typename Scalar>
double clip_grad_norm(ParamSet<Scalar>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) sq += static_cast<double>(g.data().squaredNorm());
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto k = static_cast<Scalar>(max_norm / norm);
    for (auto& [name, g] : grads) g.data() *= k;
  }
  return norm;
}

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.937;
  double weight_decay = 5e-4;  // applied to ".weight" tensors only
};

/// Heavy-ball SGD: v <- mu v + g (+ wd w); w <- w - lr v.
template <typename Scalar>
class Sgd {
 public:
  explicit Sgd(SgdConfig cfg = {}) : cfg_(cfg) {}

  void step(ParamSet<Scalar>& params, const ParamSet<Scalar>& grads, double lr_scale = 1.0) {
    if (velocity_.empty()) velocity_ = zeros_like(params);
    check_same_structure(params, grads, "sgd step");
    const auto mu = static_cast<Scalar>(cfg_.momentum);
    const auto lr = static_cast<Scalar>(cfg_.learning_rate * lr_scale);
    for (auto& [name, p] : params) {
      auto& v = velocity_.at(name).data();
      const bool decay = name.ends_with(".weight") && cfg_.weight_decay > 0.0;
      if (decay) {
        v = mu * v + grads.at(name).data() + static_cast<Scalar>(cfg_.weight_decay) * p.data();
      } else {
        v = mu * v + grads.at(name).data();
      }
      p.data() -= lr * v;
    }
  }

  const SgdConfig& config() const { return cfg_; }
  ParamSet<Scalar>& velocity() { return velocity_; }
  const ParamSet<Scalar>& velocity() const { return velocity_; }

 private:
  SgdConfig cfg_;
  ParamSet<Scalar> velocity_;
};

}  // namespace et
