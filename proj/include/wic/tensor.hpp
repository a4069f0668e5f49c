#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "wic/error.hpp"

namespace wic::numgrad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  return os.str();
}

/// Dense row-major tensor of doubles. Rank 1 and rank 2 cover everything the
/// models need; higher ranks are representable but no op consumes them.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    check_shape();
  }

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (shape_size(shape_) != data_.size()) {
      throw DimensionError("tensor of shape " + shape_string(shape_) +
                           " cannot hold " + std::to_string(data_.size()) +
                           " values");
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

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  static Tensor identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
  }

  static Tensor normal(Shape shape, double stddev, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (double& v : t.data_) v = dist(rng);
    return t;
  }

  static Tensor uniform(Shape shape, double lo, double hi,
                        std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.data_) v = dist(rng);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const {
    require_rank(2, "rows");
    return shape_[0];
  }
  std::size_t cols() const {
    require_rank(2, "cols");
    return shape_[1];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  std::span<double> row(std::size_t r) {
    return std::span<double>(data_).subspan(r * shape_[1], shape_[1]);
  }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * shape_[1], shape_[1]);
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " +
                           shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  void require_finite(const std::string& what) const {
    if (!all_finite()) throw NumericError(what + " contains NaN or Inf");
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  void check_shape() const {
    for (std::size_t d : shape_) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive");
    }
  }

  void require_rank(std::size_t r, const char* what) const {
    if (shape_.size() != r) {
      throw DimensionError(std::string(what) + " requires a rank-" +
                           std::to_string(r) + " tensor, got shape " +
                           shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<double> data_;
};

/// A trainable tensor together with its accumulated gradient.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name_, Tensor value_)
      : value(std::move(value_)), grad(value.shape()), name(std::move(name_)) {}

  void zero_grad() { grad.fill(0.0); }

  Tensor value;
  Tensor grad;
  std::string name;
};

inline void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->zero_grad();
}

/// Plain (non-differentiable) matrix product used by inference-only paths.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) +
                         " by " + shape_string(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.at(i, p);
      if (av == 0.0) continue;
      const double* brow = &b.values()[p * n];
      double* orow = &out.values()[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

/// Numerically stable softmax over a flat vector.
inline std::vector<double> softmax(std::span<const double> x) {
  if (x.empty()) throw DimensionError("softmax of an empty vector");
  const double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

inline Tensor softmax(const Tensor& x) {
  return Tensor(x.shape(), softmax(x.data()));
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

}  // namespace wic::numgrad
