#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "regulus/errors.hpp"

// Row-major dense matrix, the only numeric container the forecaster needs.

namespace regulus::forecast {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  std::normal_distribution<double> dist(0.0, 1.0);
  for (double& v : m.data) v = dist(rng);
  return m;
}

inline double squared_distance(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) fail(Errc::shape_mismatch, "matrix shapes differ");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    double d = a.data[i] - b.data[i];
    sum += d * d;
  }
  return sum;
}

}  // namespace regulus::forecast
