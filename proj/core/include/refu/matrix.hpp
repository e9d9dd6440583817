#pragma once

// Dense real matrix and the handful of kernels the rest of the library uses.
//
// Storage is row-major: entry (i, j) lives at data()[i * cols() + j]. The
// FMAT file format and the checkpoint writers rely on that layout.
//
// Every free function validates its operands (conforming shapes, finite
// entries) and throws ShapeError / ValidationError otherwise. Results are
// fresh values; nothing is modified in place.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace refu {

class Matrix {
 public:
  Matrix() = default;
  /// Zero-filled rows x cols matrix.
  Matrix(std::size_t rows, std::size_t cols);
  /// Takes ownership of row-major `data`; size must equal rows * cols.
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  /// Nested-list literal, e.g. Matrix{{1, 2}, {3, 4}}. Rows must be equally long.
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * cols_ + j]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {data_.data() + i * cols_, cols_};
  }

  bool all_finite() const noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix zeros(std::size_t rows, std::size_t cols);
Matrix identity(std::size_t n);

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
/// Element-wise product.
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

Matrix matmul(const Matrix& a, const Matrix& b);
/// aᵀ·b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a·bᵀ without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// [a | b]
Matrix hstack(const Matrix& a, const Matrix& b);
/// [a ; b]
Matrix vstack(const Matrix& a, const Matrix& b);
/// Columns [first, first + count).
Matrix slice_cols(const Matrix& a, std::size_t first, std::size_t count);
/// Rows picked by index, in the given order.
Matrix take_rows(const Matrix& a, std::span<const std::size_t> indices);

/// (a + aᵀ) / 2
Matrix symmetrize(const Matrix& a);

double frobenius_norm(const Matrix& a);
/// ‖a − b‖_F / ‖b‖_F; falls back to the absolute difference when b == 0.
double relative_error(const Matrix& a, const Matrix& b);

/// Lower-triangular Cholesky factor of an SPD matrix (after symmetrization).
/// Throws DefinitenessError carrying the index of the first non-positive pivot.
Matrix cholesky(const Matrix& a);

/// Solves a·x = b for symmetric positive-definite `a` via Cholesky.
/// `a` must be symmetric to 1e-9 relative; it is symmetrized before factoring.
Matrix spd_solve(const Matrix& a, const Matrix& b);

/// Explicit inverse of an SPD matrix. The result is exactly symmetric.
Matrix spd_inverse(const Matrix& a);

}  // namespace refu
