#include "exfilt/matrix.hpp"

#include <cassert>
#include <cmath>

namespace exfilt {

namespace {

inline double dot_unrolled(const double* a, const double* b, std::size_t k) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t t = 0;
  for (; t + 4 <= k; t += 4) {
    s0 += a[t] * b[t];
    s1 += a[t + 1] * b[t + 1];
    s2 += a[t + 2] * b[t + 2];
    s3 += a[t + 3] * b[t + 3];
  }
  double s = (s0 + s1) + (s2 + s3);
  for (; t < k; ++t) s += a[t] * b[t];
  return s;
}

}  // namespace

void matmul_nt(const Matrix& a, const Matrix& b, Matrix& out) {
  assert(a.cols() == b.cols());
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  out = Matrix(m, n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(m); ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (std::size_t j = 0; j < n; ++j) orow[j] = dot_unrolled(arow, b.row(j), k);
  }
}

void matmul_nn(const Matrix& a, const Matrix& b, Matrix& out) {
  assert(a.cols() == b.rows());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  out = Matrix(m, n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(m); ++i) {
    const double* arow = a.row(i);
    double* orow = out.row(i);
    for (std::size_t t = 0; t < k; ++t) {
      const double av = arow[t];
      const double* brow = b.row(t);
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

void matmul_tn(const Matrix& a, const Matrix& b, Matrix& out) {
  assert(a.rows() == b.rows());
  const std::size_t p = a.rows(), m = a.cols(), n = b.cols();
  out = Matrix(m, n);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(m); ++i) {
    double* orow = out.row(i);
    for (std::size_t t = 0; t < p; ++t) {
      const double av = a(t, i);
      const double* brow = b.row(t);
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return dot_unrolled(a.data(), b.data(), a.size());
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double l2_norm(std::span<const double> a) {
  return std::sqrt(dot(a, a));
}

}  // namespace exfilt
