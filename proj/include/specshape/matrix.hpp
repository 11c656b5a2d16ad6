#pragma once

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <vector>

namespace specshape {

/// Dense row-major real matrix.
///
/// Constructors that take caller data reject non-finite entries. A
/// default-constructed Matrix is the empty 0x0 placeholder; every operation
/// that needs a shape rejects it.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);
  static Matrix filled(std::size_t rows, std::size_t cols, double value);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transpose() const;
  std::vector<double> column(std::size_t j) const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);
Matrix operator*(const Matrix& a, const Matrix& b);

// y <- y + alpha * x (shapes must match)
void add_scaled(Matrix& y, double alpha, const Matrix& x);

Matrix matmul(const Matrix& a, const Matrix& b);
/// A * B^T without forming the transpose.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);
/// A^T * B without forming the transpose.
Matrix transposed_matmul(const Matrix& a, const Matrix& b);
/// X * X^T (symmetric by construction).
Matrix gram(const Matrix& x);

/// <A, B> = trace(A^T B).
double frobenius_inner(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& x);
double max_abs(const Matrix& x);
double max_abs_diff(const Matrix& a, const Matrix& b);
bool all_finite(const Matrix& x) noexcept;
double trace(const Matrix& x);

/// Throws NonFinite naming `what` if any entry is NaN/Inf.
void require_finite(const Matrix& x, const char* what);

// Text format: first line "<rows> <cols>", then `rows` lines of
// whitespace-separated decimal entries. Writing uses round-trip precision.
void write_text(std::ostream& os, const Matrix& m);
Matrix read_text(std::istream& is);
void save_text(const std::filesystem::path& path, const Matrix& m);
Matrix load_text(const std::filesystem::path& path);

}  // namespace specshape
