/*
 * Copyright 2026 The imrel Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Dense tensor kernel used by every learned component: a row-major double
// tensor, a named parameter store with gradient slots, the handful of
// forward ops the models need, plain SGD and a central-difference gradient
// checker.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "imrel/errors.hpp"

namespace imrel {

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)) {
    for (std::size_t d : shape_) {
      if (d == 0) throw std::invalid_argument("Tensor: zero-sized dimension");
    }
    values_.assign(element_count(shape_), fill);
  }

  Tensor(std::vector<std::size_t> shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    for (std::size_t d : shape_) {
      if (d == 0) throw std::invalid_argument("Tensor: zero-sized dimension");
    }
    if (element_count(shape_) != values_.size()) {
      throw std::invalid_argument("Tensor: shape does not match value count");
    }
  }

  static Tensor vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::vector<double>& storage() { return values_; }
  const std::vector<double>& storage() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double& at(std::size_t r, std::size_t c) { return values_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return values_[r * shape_[1] + c];
  }

  // Row view of a rank-2 tensor.
  std::span<double> row(std::size_t r) {
    return std::span<double>(values_).subspan(r * shape_[1], shape_[1]);
  }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values_).subspan(r * shape_[1], shape_[1]);
  }

  void fill(double v) { std::fill(values_.begin(), values_.end(), v); }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
  }

  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

// Named trainable tensors with same-shaped gradient accumulators. Gradients
// accumulate additively until sgd_step consumes and zeroes them.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    Tensor grad;
    bool trainable = true;
  };

  Tensor& add(const std::string& name, Tensor value) {
    if (entries_.count(name)) {
      throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    }
    Tensor grad(value.shape(), 0.0);
    auto [it, _] = entries_.emplace(name, Entry{std::move(value), std::move(grad)});
    return it->second.value;
  }

  bool contains(const std::string& name) const { return entries_.count(name) > 0; }

  Entry& entry(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
      throw std::out_of_range("ParamStore: unknown parameter " + name);
    }
    return it->second;
  }
  const Entry& entry(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
      throw std::out_of_range("ParamStore: unknown parameter " + name);
    }
    return it->second;
  }

  Tensor& value(const std::string& name) { return entry(name).value; }
  const Tensor& value(const std::string& name) const { return entry(name).value; }
  Tensor& grad(const std::string& name) { return entry(name).grad; }
  const Tensor& grad(const std::string& name) const { return entry(name).grad; }

  void set_trainable(const std::string& name, bool trainable) {
    entry(name).trainable = trainable;
  }

  void zero_grad() {
    for (auto& [_, e] : entries_) e.grad.fill(0.0);
  }

  // Ordered by name, so iteration is deterministic.
  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_) n += e.value.size();
    return n;
  }

 private:
  std::map<std::string, Entry> entries_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// y += a * x
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(sigmoid(x)) without underflow for large negative x.
inline double log_sigmoid(double x) {
  if (x >= 0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

inline std::vector<double> softmax(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("softmax: empty input");
  const double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> out(v.size());
  double z = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - mx);
    z += out[i];
  }
  for (double& o : out) o /= z;
  return out;
}

inline Tensor softmax(const Tensor& v) {
  if (v.rank() != 1) throw std::invalid_argument("softmax: expected rank-1 tensor");
  return Tensor::vector(softmax(v.values()));
}

// Backward through p = softmax(u): returns dL/du given dL/dp.
inline std::vector<double> softmax_backward(std::span<const double> p,
                                            std::span<const double> dp) {
  const double inner = dot(p, dp);
  std::vector<double> du(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) du[i] = p[i] * (dp[i] - inner);
  return du;
}

inline std::vector<double> affine(const Tensor& w, std::span<const double> x,
                                  std::span<const double> b) {
  if (w.rank() != 2 || w.dim(1) != x.size() || w.dim(0) != b.size()) {
    throw std::invalid_argument("affine: shape mismatch");
  }
  std::vector<double> out(b.begin(), b.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += dot(w.row(i), x);
  return out;
}

inline Tensor affine(const Tensor& w, const Tensor& x, const Tensor& b) {
  if (x.rank() != 1 || b.rank() != 1) {
    throw std::invalid_argument("affine: x and b must be rank-1");
  }
  return Tensor::vector(affine(w, x.values(), b.values()));
}

// value -= lr * grad for every trainable entry; all gradients are zeroed.
inline void sgd_step(ParamStore& params, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("sgd_step: lr must be positive");
  for (auto& [name, e] : params.entries()) {
    if (e.trainable) {
      auto v = e.value.values();
      auto g = e.grad.values();
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
      if (!e.value.all_finite()) {
        throw NumericError("sgd_step: non-finite value in " + name);
      }
    }
    e.grad.fill(0.0);
  }
}

// Compares the gradients stored in `params` against central differences of
// `loss`. Returns max |analytic - numeric| / max(1e-8, |numeric|).
inline double finite_diff_check(
    const std::function<double(const ParamStore&)>& loss,
    const ParamStore& params, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw std::invalid_argument("finite_diff_check: eps outside [1e-7, 1e-3]");
  }
  ParamStore probe = params;
  double worst = 0.0;
  for (auto& [name, e] : probe.entries()) {
    const Tensor& analytic = params.grad(name);
    auto v = e.value.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + eps;
      const double up = loss(probe);
      v[i] = saved - eps;
      const double down = loss(probe);
      v[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err =
          std::abs(analytic[i] - numeric) / std::max(1e-8, std::abs(numeric));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace imrel
