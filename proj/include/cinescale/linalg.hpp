#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "cinescale/parallel.hpp"

namespace cinescale {

/// Row-major dense matrix.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const Mat&) const = default;

  std::string shape_string() const { return std::to_string(rows) + "x" + std::to_string(cols); }
};

inline void require_shape(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

/// A * B^T  (n x k) * (m x k)^T -> n x m.
inline Mat matmul_nt(const Mat& a, const Mat& b) {
  require_shape(a.cols == b.cols, "matmul_nt");
  Mat out(a.rows, b.rows);
  parallel_for(a.rows, [&](std::size_t i) {
    const double* ar = a.row(i);
    double* o = out.row(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* br = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += ar[k] * br[k];
      o[j] = s;
    }
  });
  return out;
}

/// A * B  (n x k) * (k x m) -> n x m.
inline Mat matmul_nn(const Mat& a, const Mat& b) {
  require_shape(a.cols == b.rows, "matmul_nn");
  Mat out(a.rows, b.cols);
  parallel_for(a.rows, [&](std::size_t i) {
    const double* ar = a.row(i);
    double* o = out.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double av = ar[k];
      const double* br = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) o[j] += av * br[j];
    }
  });
  return out;
}

/// A^T * B  (k x n)^T * (k x m) -> n x m.
inline Mat matmul_tn(const Mat& a, const Mat& b) {
  require_shape(a.rows == b.rows, "matmul_tn");
  Mat out(a.cols, b.cols);
  parallel_for(a.cols, [&](std::size_t i) {
    double* o = out.row(i);
    for (std::size_t k = 0; k < a.rows; ++k) {
      const double av = a(k, i);
      const double* br = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) o[j] += av * br[j];
    }
  });
  return out;
}

inline void add_inplace(Mat& a, const Mat& b) {
  require_shape(a.same_shape(b), "add_inplace");
  for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

}  // namespace cinescale
