#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace acan {

// Dense row-major matrix of 64-bit floats. All numeric state in this project
// (feature batches, weights, gradients) lives in this type.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool all_finite() const;

  friend bool operator==(const Matrix& a, const Matrix& b) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Standard matrix product. Throws DimensionError naming both shapes on mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);

// c = a + b, elementwise; shapes must match.
Matrix add(const Matrix& a, const Matrix& b);

// a += scale * b, elementwise; shapes must match.
void add_scaled(Matrix& a, const Matrix& b, double scale);

Matrix scaled(const Matrix& m, double scale);

// Throws DimensionError if any entry is NaN/Inf; `context` names the producer.
void check_finite(const Matrix& m, const char* context);

std::string shape_string(const Matrix& m);

}  // namespace acan
