#include "specshape/matrix.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "specshape/error.hpp"
#include "specshape/kernels.hpp"

namespace specshape {
namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    std::ostringstream msg;
    msg << op << ": shape mismatch " << a.rows() << "x" << a.cols() << " vs " << b.rows() << "x"
        << b.cols();
    throw Error(ErrorKind::ShapeMismatch, msg.str());
  }
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

double parse_entry(std::string_view tok, std::size_t line) {
  double v = 0.0;
  const auto* first = tok.data();
  const auto* last = tok.data() + tok.size();
  if (!tok.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw Error(ErrorKind::ParseError, line, "invalid matrix entry '" + std::string(tok) + "'");
  }
  if (!std::isfinite(v)) {
    throw Error(ErrorKind::NonFinite, line, "non-finite matrix entry '" + std::string(tok) + "'");
  }
  return v;
}

std::size_t parse_dim(std::string_view tok, std::size_t line) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || v == 0) {
    throw Error(ErrorKind::ParseError, line, "invalid matrix dimension '" + std::string(tok) + "'");
  }
  return v;
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), data_(std::move(entries)) {
  if (data_.size() != rows_ * cols_) {
    throw Error(ErrorKind::ShapeMismatch, "entry count does not match rows*cols");
  }
  require_finite(*this, "Matrix");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error(ErrorKind::ShapeMismatch, "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
  require_finite(*this, "Matrix");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> values) {
  Matrix m(values.size(), values.size());
  for (std::size_t i = 0; i < values.size(); ++i) m(i, i) = values[i];
  require_finite(m, "Matrix::diagonal");
  return m;
}

Matrix Matrix::filled(std::size_t rows, std::size_t cols, double value) {
  return Matrix(rows, cols, std::vector<double>(rows * cols, value));
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

std::vector<double> Matrix::column(std::size_t j) const {
  std::vector<double> c(rows_);
  for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
  return c;
}

Matrix& Matrix::operator+=(const Matrix& other) {
  require_same_shape(*this, other, "operator+=");
  kernels::axpy(1.0, other.data_, data_);
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  require_same_shape(*this, other, "operator-=");
  kernels::axpy(-1.0, other.data_, data_);
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  kernels::scale(s, data_);
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }
Matrix operator*(const Matrix& a, const Matrix& b) { return matmul(a, b); }

void add_scaled(Matrix& y, double alpha, const Matrix& x) {
  require_same_shape(y, x, "add_scaled");
  kernels::axpy(alpha, x.data(), y.data());
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw Error(ErrorKind::ShapeMismatch, "matmul: inner dimensions differ");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ci = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik != 0.0) kernels::axpy(aik, b.row(k), ci);
    }
  }
  return c;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw Error(ErrorKind::ShapeMismatch, "matmul_transposed: column counts differ");
  Matrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.rows(); ++j) c(i, j) = kernels::dot(a.row(i), b.row(j));
  return c;
}

Matrix transposed_matmul(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw Error(ErrorKind::ShapeMismatch, "transposed_matmul: row counts differ");
  Matrix c(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const auto ak = a.row(k);
    const auto bk = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      if (ak[i] != 0.0) kernels::axpy(ak[i], bk, c.row(i));
    }
  }
  return c;
}

Matrix gram(const Matrix& x) {
  Matrix g(x.rows(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = i; j < x.rows(); ++j) {
      const double v = kernels::dot(x.row(i), x.row(j));
      g(i, j) = v;
      g(j, i) = v;
    }
  }
  return g;
}

double frobenius_inner(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "frobenius_inner");
  return kernels::dot(a.data(), b.data());
}

double frobenius_norm(const Matrix& x) {
  require_finite(x, "frobenius_norm");
  // Rescale by the largest magnitude so squaring cannot overflow or underflow.
  const double big = max_abs(x);
  if (big == 0.0) return 0.0;
  if (big > 1e150 || big < 1e-150) {
    double acc = 0.0;
    for (double v : x.data()) acc += (v / big) * (v / big);
    return big * std::sqrt(acc);
  }
  return std::sqrt(kernels::sum_squares(x.data()));
}

double max_abs(const Matrix& x) {
  double m = 0.0;
  for (double v : x.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

bool all_finite(const Matrix& x) noexcept {
  for (double v : x.data())
    if (!std::isfinite(v)) return false;
  return true;
}

double trace(const Matrix& x) {
  double t = 0.0;
  for (std::size_t i = 0; i < std::min(x.rows(), x.cols()); ++i) t += x(i, i);
  return t;
}

void require_finite(const Matrix& x, const char* what) {
  if (!all_finite(x)) throw Error(ErrorKind::NonFinite, std::string(what) + ": non-finite entry");
}

void write_text(std::ostream& os, const Matrix& m) {
  os << m.rows() << ' ' << m.cols() << '\n';
  char buf[32];
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, m(i, j));
      if (j) os << ' ';
      os.write(buf, ptr - buf);
    }
    os << '\n';
  }
}

Matrix read_text(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(is, line)) throw Error(ErrorKind::ParseError, 1, "missing matrix header");
  ++lineno;
  const auto header = split_ws(line);
  if (header.size() != 2) throw Error(ErrorKind::ParseError, lineno, "header must be '<rows> <cols>'");
  const std::size_t rows = parse_dim(header[0], lineno);
  const std::size_t cols = parse_dim(header[1], lineno);
  std::vector<double> entries;
  entries.reserve(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!std::getline(is, line)) {
      throw Error(ErrorKind::ParseError, lineno + 1, "expected " + std::to_string(rows) + " rows");
    }
    ++lineno;
    const auto tokens = split_ws(line);
    if (tokens.size() != cols) {
      throw Error(ErrorKind::ParseError, lineno,
                  "expected " + std::to_string(cols) + " entries, found " + std::to_string(tokens.size()));
    }
    for (auto tok : tokens) entries.push_back(parse_entry(tok, lineno));
  }
  return Matrix(rows, cols, std::move(entries));
}

void save_text(const std::filesystem::path& path, const Matrix& m) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::Io, "cannot write " + path.string());
  write_text(os, m);
}

Matrix load_text(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::Io, "cannot read " + path.string());
  Matrix m = read_text(is);
  // Anything after the declared rows other than whitespace is a count error.
  std::string rest;
  while (std::getline(is, rest)) {
    if (!split_ws(rest).empty()) throw Error(ErrorKind::ParseError, m.rows() + 2, "trailing data after matrix");
  }
  return m;
}

}  // namespace specshape
