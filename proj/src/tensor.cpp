// Copyright 2026 The splitleak Authors
// SPDX-License-Identifier: Apache-2.0

#include "splitleak/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace splitleak {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.size() > 2) {
    throw ShapeError("tensor rank " + std::to_string(shape.size()) + " unsupported (max 2)");
  }
  for (auto d : shape) {
    if (d == 0) throw ShapeError("zero-sized dimension in shape " + shape_to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_to_string(shape_));
  }
}

Tensor Tensor::vector(std::vector<double> v) {
  const auto n = v.size();
  return Tensor(Shape{n}, std::move(v));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw ShapeError("from_rows: no rows");
  const std::size_t c = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * c);
  for (const auto& r : rows) {
    if (r.size() != c) throw ShapeError("from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Tensor(Shape{rows.size(), c}, std::move(data));
}

Tensor Tensor::column(std::span<const double> v) {
  return Tensor(Shape{v.size(), 1}, std::vector<double>(v.begin(), v.end()));
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on non-scalar tensor of shape " + shape_to_string(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw ShapeError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out = Tensor::matrix(n, m);
  auto o = out.data();
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    double* orow = o.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = av[i * k + p];
      if (s == 0.0) continue;
      const double* brow = bv.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += s * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected matrix, got " + shape_to_string(a.shape()));
  Tensor out = Tensor::matrix(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  if (a.rank() != 2) throw ShapeError("gather_rows: expected matrix");
  if (indices.empty()) throw ShapeError("gather_rows: empty index list");
  Tensor out = Tensor::matrix(indices.size(), a.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= a.rows()) throw ShapeError("gather_rows: row index out of range");
    auto src = a.row(indices[r]);
    std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(r * a.cols()));
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace splitleak
