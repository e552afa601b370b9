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
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "et/errors.hpp"

namespace et {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

/// Dense row-major tensor over a flat Eigen vector. Feature maps use [C, H, W].
template <typename Scalar>
class Tensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(Vector::Zero(shape_size(shape_))) {}
  Tensor(Shape shape, Vector data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_)) {
      throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                        " does not match shape " + shape_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index dim(std::size_t i) const { return shape_.at(i); }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  Vector& data() { return data_; }
  const Vector& data() const { return data_; }
  Scalar* ptr() { return data_.data(); }
  const Scalar* ptr() const { return data_.data(); }
  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  // [C, H, W] accessors.
  Scalar& at(Index c, Index y, Index x) { return data_[(c * shape_[1] + y) * shape_[2] + x]; }
  Scalar at(Index c, Index y, Index x) const { return data_[(c * shape_[1] + y) * shape_[2] + x]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  void check_finite(std::string_view where) const {
    if (!data_.allFinite()) throw NumericError("non-finite value in " + std::string(where));
  }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, data_.template cast<Other>());
  }

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

 private:
  Shape shape_;
  Vector data_;
};

/// Named parameter collection (weights, biases). Ordered so iteration and
/// serialization are deterministic.
template <typename Scalar>
using ParamSet = std::map<std::string, Tensor<Scalar>>;

/// Throws ConfigError when the two sets differ in names or shapes.
template <typename A, typename B>
void check_same_structure(const ParamSet<A>& a, const ParamSet<B>& b, std::string_view what) {
  if (a.size() != b.size()) {
    throw ConfigError(std::string(what) + ": parameter count differs (" + std::to_string(a.size()) +
                      " vs " + std::to_string(b.size()) + ")");
  }
  auto ia = a.begin();
  auto ib = b.begin();
  for (; ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first) {
      throw ConfigError(std::string(what) + ": parameter name mismatch '" + ia->first + "' vs '" +
                        ib->first + "'");
    }
    if (ia->second.shape() != ib->second.shape()) {
      throw ConfigError(std::string(what) + ": shape mismatch for '" + ia->first + "' " +
                        shape_string(ia->second.shape()) + " vs " +
                        shape_string(ib->second.shape()));
    }
  }
}

template <typename Scalar>
ParamSet<Scalar> zeros_like(const ParamSet<Scalar>& params) {
  ParamSet<Scalar> out;
  for (const auto& [name, t] : params) out.emplace(name, Tensor<Scalar>(t.shape()));
  return out;
}

template <typename To, typename From>
ParamSet<To> cast_params(const ParamSet<From>& params) {
  ParamSet<To> out;
  for (const auto& [name, t] : params) out.emplace(name, t.template cast<To>());
  return out;
}

template <typename Scalar>
void check_finite(const ParamSet<Scalar>& params, std::string_view where) {
  for (const auto& [name, t] : params) t.check_finite(std::string(where) + ":" + name);
}

/// Max over all entries of |a - b|.
template <typename Scalar>
double max_abs_diff(const ParamSet<Scalar>& a, const ParamSet<Scalar>& b) {
  check_same_structure(a, b, "max_abs_diff");
  double m = 0.0;
  for (const auto& [name, t] : a) {
    if (t.size() == 0) continue;
    m = std::max(m, static_cast<double>((t.data() - b.at(name).data()).cwiseAbs().maxCoeff()));
  }
  return m;
}

}  // namespace et
