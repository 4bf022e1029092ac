#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace exfilt {

// Dense row-major matrix of doubles. Products below compute every output
// element as an independent fixed-order dot product, so results are
// bit-identical regardless of thread count.
class Matrix {
 public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  double* row(std::size_t i) { return data_.data() + i * cols_; }
  const double* row(std::size_t i) const { return data_.data() + i * cols_; }
  std::span<const double> row_span(std::size_t i) const {
    return {row(i), cols_};
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& storage() const { return data_; }
  std::vector<double>& storage() { return data_; }

  void fill(double v) { data_.assign(data_.size(), v); }

  void set_row(std::size_t i, std::span<const double> values) {
    double* dst = row(i);
    for (std::size_t j = 0; j < cols_; ++j) dst[j] = values[j];
  }

  Matrix take_rows(const std::vector<std::size_t>& idx) const {
    Matrix out(idx.size(), cols_);
    for (std::size_t i = 0; i < idx.size(); ++i) out.set_row(i, row_span(idx[i]));
    return out;
  }

  bool operator==(const Matrix& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
  }

 private:
  std::size_t rows_, cols_;
  std::vector<double> data_;
};

// out[m x n] = A[m x k] * B^T where B is [n x k].
void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out);

// out[m x n] = A[m x k] * B[k x n].
void matmul_nn(const Matrix& a, const Matrix& b, Matrix& out);

// out[m x n] = A^T * B where A is [p x m], B is [p x n].
void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out);

double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);

}  // namespace exfilt
