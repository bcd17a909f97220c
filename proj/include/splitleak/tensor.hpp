// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace splitleak {

/// Raised whenever operand shapes are incompatible with an operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor of doubles, rank 0 to 2.
///
/// Rank 0 is a scalar, rank 1 a vector of length shape[0], rank 2 a
/// rows x cols matrix. Every dimension is positive, so a tensor always
/// holds at least one element.
class Tensor {
 public:
  Tensor() : shape_{}, data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor(Shape{rows, cols}, fill);
  }
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  /// n x 1 column from the given values.
  static Tensor column(std::span<const double> v);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool is_scalar() const noexcept { return data_.size() == 1; }

  /// Row count when viewed as a matrix (rank 0 and 1 are a single row).
  std::size_t rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }
  std::size_t cols() const noexcept {
    return shape_.empty() ? 1 : shape_.back();
  }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(data_).subspan(r * cols(), cols());
  }

  bool all_finite() const noexcept;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t shape_numel(const Shape& shape);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Rows `indices` of a rank-2 tensor, in order.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace splitleak
