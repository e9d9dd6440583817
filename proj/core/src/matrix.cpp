#include "refu/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "refu/errors.hpp"

namespace refu {
namespace {

std::string dims(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_finite(const Matrix& m, const char* op) {
  if (!m.all_finite()) {
    throw ValidationError(std::string(op) + ": operand contains NaN or Inf");
  }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": " + dims(a) + " vs " + dims(b));
  }
}

void require_square(const Matrix& a, const char* op) {
  if (a.rows() != a.cols()) {
    throw ShapeError(std::string(op) + ": expected square matrix, got " + dims(a));
  }
}

void require_finite_result(const Matrix& m, const char* op) {
  if (!m.all_finite()) {
    throw NumericalError(std::string(op) + ": result overflowed to a non-finite value");
  }
}

template <typename F>
Matrix elementwise(const Matrix& a, const Matrix& b, const char* op, F f) {
  require_same_shape(a, b, op);
  require_finite(a, op);
  require_finite(b, op);
  Matrix out(a.rows(), a.cols());
  auto x = a.data();
  auto y = b.data();
  auto z = out.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = f(x[i], y[i]);
  require_finite_result(out, op);
  return out;
}

// Forward then backward substitution with the lower factor L (L·Lᵀ·x = b),
// applied column by column of b in place.
void cholesky_substitute(const Matrix& l, Matrix& x) {
  const std::size_t n = l.rows();
  const std::size_t m = x.cols();
  for (std::size_t i = 0; i < n; ++i) {
    auto xi = x.row(i);
    for (std::size_t k = 0; k < i; ++k) {
      const double lik = l(i, k);
      if (lik == 0.0) continue;
      auto xk = x.row(k);
      for (std::size_t j = 0; j < m; ++j) xi[j] -= lik * xk[j];
    }
    const double inv = 1.0 / l(i, i);
    for (std::size_t j = 0; j < m; ++j) xi[j] *= inv;
  }
  for (std::size_t ii = n; ii-- > 0;) {
    auto xi = x.row(ii);
    for (std::size_t k = ii + 1; k < n; ++k) {
      const double lki = l(k, ii);
      if (lki == 0.0) continue;
      auto xk = x.row(k);
      for (std::size_t j = 0; j < m; ++j) xi[j] -= lki * xk[j];
    }
    const double inv = 1.0 / l(ii, ii);
    for (std::size_t j = 0; j < m; ++j) xi[j] *= inv;
  }
}

void require_symmetric(const Matrix& a, const char* op) {
  double asym = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double d = a(i, j) - a(j, i);
      asym += d * d;
      total += a(i, j) * a(i, j);
    }
  }
  if (std::sqrt(asym) > 1e-9 * std::sqrt(total)) {
    throw ValidationError(std::string(op) + ": matrix is not symmetric (relative asymmetry " +
                          std::to_string(std::sqrt(asym / total)) + ")");
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("Matrix: " + std::to_string(data_.size()) + " values for " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() == 0 ? 0 : rows.begin()->size()) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols); }

Matrix identity(std::size_t n) {
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  return elementwise(a, b, "add", [](double x, double y) { return x + y; });
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  return elementwise(a, b, "subtract", [](double x, double y) { return x - y; });
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  return elementwise(a, b, "hadamard", [](double x, double y) { return x * y; });
}

Matrix scale(const Matrix& a, double s) {
  require_finite(a, "scale");
  if (!std::isfinite(s)) throw ValidationError("scale: non-finite factor");
  Matrix out = a;
  for (double& v : out.data()) v *= s;
  require_finite_result(out, "scale");
  return out;
}

Matrix transpose(const Matrix& a) {
  require_finite(a, "transpose");
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: " + dims(a) + " times " + dims(b));
  require_finite(a, "matmul");
  require_finite(b, "matmul");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto oi = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) oi[j] += aik * bk[j];
    }
  }
  require_finite_result(out, "matmul");
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: " + dims(a) + "ᵀ times " + dims(b));
  require_finite(a, "matmul_tn");
  require_finite(b, "matmul_tn");
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto ak = a.row(k);
    auto bk = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      auto oi = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) oi[j] += aki * bk[j];
    }
  }
  require_finite_result(out, "matmul_tn");
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: " + dims(a) + " times " + dims(b) + "ᵀ");
  require_finite(a, "matmul_nt");
  require_finite(b, "matmul_nt");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ai = a.row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      auto bj = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += ai[k] * bj[k];
      out(i, j) = acc;
    }
  }
  require_finite_result(out, "matmul_nt");
  return out;
}

Matrix hstack(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("hstack: " + dims(a) + " | " + dims(b));
  Matrix out(a.rows(), a.cols() + b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto o = out.row(i);
    std::copy(a.row(i).begin(), a.row(i).end(), o.begin());
    std::copy(b.row(i).begin(), b.row(i).end(), o.begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
  return out;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.empty() && a.cols() == 0) return b;
  if (a.cols() != b.cols()) throw ShapeError("vstack: " + dims(a) + " ; " + dims(b));
  std::vector<double> data(a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return Matrix(a.rows() + b.rows(), a.cols(), std::move(data));
}

Matrix slice_cols(const Matrix& a, std::size_t first, std::size_t count) {
  if (first + count > a.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(first) + ", " +
                     std::to_string(first + count) + ") of " + dims(a));
  }
  Matrix out(a.rows(), count);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = a(i, first + j);
  return out;
}

Matrix take_rows(const Matrix& a, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), a.cols());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= a.rows()) throw ShapeError("take_rows: row index out of range");
    std::copy(a.row(indices[r]).begin(), a.row(indices[r]).end(), out.row(r).begin());
  }
  return out;
}

Matrix symmetrize(const Matrix& a) {
  require_square(a, "symmetrize");
  require_finite(a, "symmetrize");
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    out(i, i) = a(i, i);
    for (std::size_t j = i + 1; j < a.cols(); ++j) {
      const double v = 0.5 * (a(i, j) + a(j, i));
      out(i, j) = v;
      out(j, i) = v;
    }
  }
  return out;
}

double frobenius_norm(const Matrix& a) {
  require_finite(a, "frobenius_norm");
  double acc = 0.0;
  for (double v : a.data()) acc += v * v;
  return std::sqrt(acc);
}

double relative_error(const Matrix& a, const Matrix& b) {
  const double diff = frobenius_norm(subtract(a, b));
  const double ref = frobenius_norm(b);
  return ref == 0.0 ? diff : diff / ref;
}

Matrix cholesky(const Matrix& a) {
  require_square(a, "cholesky");
  require_finite(a, "cholesky");
  require_symmetric(a, "cholesky");
  const Matrix s = symmetrize(a);
  const std::size_t n = s.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double diag = s(j, j);
    auto lj = l.row(j);
    for (std::size_t k = 0; k < j; ++k) diag -= lj[k] * lj[k];
    if (!(diag > 0.0)) {
      throw DefinitenessError("cholesky: matrix is not positive definite", j);
    }
    const double ljj = std::sqrt(diag);
    lj[j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      auto li = l.row(i);
      double v = s(i, j);
      for (std::size_t k = 0; k < j; ++k) v -= li[k] * lj[k];
      li[j] = v / ljj;
    }
  }
  return l;
}

Matrix spd_solve(const Matrix& a, const Matrix& b) {
  require_square(a, "spd_solve");
  if (a.rows() != b.rows()) throw ShapeError("spd_solve: " + dims(a) + " with rhs " + dims(b));
  require_finite(b, "spd_solve");
  const Matrix l = cholesky(a);
  Matrix x = b;
  cholesky_substitute(l, x);
  require_finite_result(x, "spd_solve");
  return x;
}

Matrix spd_inverse(const Matrix& a) {
  require_square(a, "spd_inverse");
  const Matrix l = cholesky(a);
  Matrix x = identity(a.rows());
  cholesky_substitute(l, x);
  require_finite_result(x, "spd_inverse");
  return symmetrize(x);
}

}  // namespace refu
