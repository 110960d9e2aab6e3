#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "dre/errors.hpp"

namespace dre {

// Dense row-major matrix of doubles. Vectors are n x 1 (or 1 x n for biases).
// All arithmetic lives in free functions so the tape and the tape-free
// prediction path share one implementation.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(checked_size(r, c), 0.0) {}

  // Validates before the element vector allocates, so a negative dimension
  // surfaces as a precondition failure instead of an allocation error.
  static std::size_t checked_size(int r, int c) {
    if (r < 0 || c < 0) throw precondition_error("negative tensor dimension");
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(c);
  }

  static Tensor zeros(int r, int c) { return Tensor(r, c); }

  static Tensor full(int r, int c, double x) {
    Tensor t(r, c);
    std::fill(t.v.begin(), t.v.end(), x);
    return t;
  }

  static Tensor from_rows(const std::vector<std::vector<double>>& rows_in) {
    if (rows_in.empty()) throw precondition_error("from_rows: no rows");
    Tensor t(static_cast<int>(rows_in.size()), static_cast<int>(rows_in[0].size()));
    for (int i = 0; i < t.rows; ++i) {
      if (static_cast<int>(rows_in[i].size()) != t.cols)
        throw precondition_error("from_rows: ragged rows");
      for (int j = 0; j < t.cols; ++j) t.at(i, j) = rows_in[i][j];
    }
    return t;
  }

  std::size_t size() const { return v.size(); }

  double& at(int i, int j) { return v[static_cast<std::size_t>(i) * cols + j]; }
  double at(int i, int j) const { return v[static_cast<std::size_t>(i) * cols + j]; }

  const double* row_ptr(int i) const { return v.data() + static_cast<std::size_t>(i) * cols; }
  double* row_ptr(int i) { return v.data() + static_cast<std::size_t>(i) * cols; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  Tensor gather_rows(const std::vector<int>& idx) const {
    Tensor out(static_cast<int>(idx.size()), cols);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < cols; ++j) out.at(static_cast<int>(i), j) = at(idx[i], j);
    return out;
  }
};

inline void require_finite(const Tensor& t, const char* where) {
  if (!t.all_finite()) throw non_finite_error(std::string("non-finite values in ") + where);
}

namespace detail {
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;
}  // namespace detail

// c = a * b
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols != b.rows) throw precondition_error("matmul: inner dimensions differ");
  Tensor c(a.rows, b.cols);
  detail::MMap(c.v.data(), c.rows, c.cols).noalias() =
      detail::CMap(a.v.data(), a.rows, a.cols) * detail::CMap(b.v.data(), b.rows, b.cols);
  return c;
}

// acc += a * b^T
inline void matmul_bt_acc(Tensor& acc, const Tensor& a, const Tensor& b) {
  if (a.cols != b.cols || acc.rows != a.rows || acc.cols != b.rows)
    throw precondition_error("matmul_bt_acc: shape mismatch");
  detail::MMap(acc.v.data(), acc.rows, acc.cols).noalias() +=
      detail::CMap(a.v.data(), a.rows, a.cols) *
      detail::CMap(b.v.data(), b.rows, b.cols).transpose();
}

// acc += a^T * b
inline void matmul_at_acc(Tensor& acc, const Tensor& a, const Tensor& b) {
  if (a.rows != b.rows || acc.rows != a.cols || acc.cols != b.cols)
    throw precondition_error("matmul_at_acc: shape mismatch");
  detail::MMap(acc.v.data(), acc.rows, acc.cols).noalias() +=
      detail::CMap(a.v.data(), a.rows, a.cols).transpose() *
      detail::CMap(b.v.data(), b.rows, b.cols);
}

// out = x + broadcast rows of bias (bias is 1 x cols).
inline Tensor add_row_broadcast(const Tensor& x, const Tensor& bias) {
  if (bias.rows != 1 || bias.cols != x.cols)
    throw precondition_error("add_row_broadcast: bias must be 1 x cols");
  Tensor out = x;
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out.at(i, j) += bias.at(0, j);
  return out;
}

}  // namespace dre
