// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rtpb {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  void fill(double value);
  bool same_shape(const Matrix& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }
  bool all_finite() const;

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix identity(std::size_t n);
Matrix transpose(const Matrix& a);

/// C = A * B. Throws std::invalid_argument when A.cols != B.rows.
Matrix matmul(const Matrix& a, const Matrix& b);
/// A * B^T.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// A^T * B.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

struct MatmulGrads {
  Matrix d_a;  // G * B^T
  Matrix d_b;  // A^T * G
};
MatmulGrads matmul_backward(const Matrix& a, const Matrix& b, const Matrix& upstream);

/// a += b (shapes must match).
void add_inplace(Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
void scale_inplace(Matrix& a, double factor);

/// Row-wise max-subtracted softmax.
Matrix row_softmax(const Matrix& logits);
/// Gradient through row_softmax given its output P and upstream dP.
Matrix row_softmax_backward(const Matrix& probs, const Matrix& upstream);

/// Columns [begin, begin + count) as a new matrix.
Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t count);
/// dst[:, begin : begin + src.cols] += src.
void add_into_cols(Matrix& dst, const Matrix& src, std::size_t begin);

/// Horizontal concatenation of equal-height blocks.
Matrix hconcat(std::span<const Matrix> blocks);

}  // namespace rtpb
