// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#include "rtpb/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rtpb {

namespace {

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(op) + ": shape " + shape(a) + " vs " + shape(b));
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) throw std::invalid_argument("matrix data length does not match shape");
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: shape " + shape(a) + " * " + shape(b));
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += aik * brow[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("matmul_nt: shape " + shape(a) + " * " + shape(b) + "^T");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto arow = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const auto brow = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < arow.size(); ++k) acc += arow[k] * brow[k];
      c(i, j) = acc;
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("matmul_tn: shape " + shape(a) + "^T * " + shape(b));
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto arow = a.row(k);
    const auto brow = b.row(k);
    for (std::size_t i = 0; i < arow.size(); ++i) {
      const double aki = arow[i];
      auto out = c.row(i);
      for (std::size_t j = 0; j < brow.size(); ++j) out[j] += aki * brow[j];
    }
  }
  return c;
}

MatmulGrads matmul_backward(const Matrix& a, const Matrix& b, const Matrix& upstream) {
  if (upstream.rows() != a.rows() || upstream.cols() != b.cols()) {
    throw std::invalid_argument("matmul_backward: upstream shape " + shape(upstream));
  }
  return {matmul_nt(upstream, b), matmul_tn(a, upstream)};
}

void add_inplace(Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  auto dst = a.flat();
  const auto src = b.flat();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix out = a;
  add_inplace(out, b);
  return out;
}

void scale_inplace(Matrix& a, double factor) {
  for (double& v : a.flat()) v *= factor;
}

Matrix row_softmax(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto in = logits.row(i);
    auto out = p.row(i);
    const double m = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      out[j] = std::exp(in[j] - m);
      sum += out[j];
    }
    for (double& v : out) v /= sum;
  }
  return p;
}

Matrix row_softmax_backward(const Matrix& probs, const Matrix& upstream) {
  require_same_shape(probs, upstream, "row_softmax_backward");
  Matrix d(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto p = probs.row(i);
    const auto g = upstream.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) dot += p[j] * g[j];
    auto out = d.row(i);
    for (std::size_t j = 0; j < p.size(); ++j) out[j] = p[j] * (g[j] - dot);
  }
  return d;
}

Matrix slice_cols(const Matrix& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols()) throw std::invalid_argument("slice_cols: range outside matrix");
  Matrix out(a.rows(), count);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a(i, begin + j);
  return out;
}

void add_into_cols(Matrix& dst, const Matrix& src, std::size_t begin) {
  if (dst.rows() != src.rows() || begin + src.cols() > dst.cols()) {
    throw std::invalid_argument("add_into_cols: block does not fit");
  }
  for (std::size_t i = 0; i < src.rows(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) dst(i, begin + j) += src(i, j);
}

Matrix hconcat(std::span<const Matrix> blocks) {
  if (blocks.empty()) return {};
  std::size_t cols = 0;
  for (const auto& b : blocks) {
    if (b.rows() != blocks[0].rows()) throw std::invalid_argument("hconcat: row count mismatch");
    cols += b.cols();
  }
  Matrix out(blocks[0].rows(), cols);
  std::size_t offset = 0;
  for (const auto& b : blocks) {
    for (std::size_t i = 0; i < b.rows(); ++i)
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, offset + j) = b(i, j);
    offset += b.cols();
  }
  return out;
}

}  // namespace rtpb
