#include "acan/matrix.hpp"

#include <cmath>
#include <string>

#include "acan/errors.hpp"

namespace acan {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  Matrix m(r, c);
  std::size_t i = 0;
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("from_rows: ragged row " + std::to_string(i));
    std::size_t j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

bool Matrix::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a) + " * " +
                         shape_string(b));
  }
  Matrix out(a.rows(), b.cols());
  // i-k-j order keeps the inner loop contiguous in both b and out.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* out_row = out.values().data() + i * out.cols();
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* b_row = b.values().data() + k * b.cols();
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  }
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("add: shape mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.values()[i] += b.values()[i];
  return out;
}

void add_scaled(Matrix& a, const Matrix& b, double scale) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("add_scaled: shape mismatch " + shape_string(a) + " vs " +
                         shape_string(b));
  }
  for (std::size_t i = 0; i < a.size(); ++i) a.values()[i] += scale * b.values()[i];
}

Matrix scaled(const Matrix& m, double scale) {
  Matrix out = m;
  for (double& v : out.values()) v *= scale;
  return out;
}

void check_finite(const Matrix& m, const char* context) {
  if (!m.all_finite()) {
    throw DimensionError(std::string(context) + ": non-finite entries");
  }
}

}  // namespace acan
