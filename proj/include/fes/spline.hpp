#pragma once

#include <cstddef>
#include <vector>

#include "fes/error.hpp"

namespace fes {

/// Natural cubic spline on uniformly spaced nodes x = 0, 1, ..., n-1.
/// Evaluation reproduces node values exactly; queries beyond the last node
/// extend the final cubic segment.
class NaturalCubicSpline {
public:
  explicit NaturalCubicSpline(std::vector<double> y) : y_(std::move(y)) {
    std::size_t n = y_.size();
    require_arg(n >= 2, "spline needs at least two nodes");
    m_.assign(n, 0.0);
    if (n == 2) return;
    // Thomas algorithm for the tridiagonal system (h == 1):
    //   m[i-1] + 4 m[i] + m[i+1] = 6 (y[i+1] - 2 y[i] + y[i-1])
    std::size_t k = n - 2;
    std::vector<double> c(k, 0.0), d(k, 0.0);
    for (std::size_t i = 0; i < k; ++i)
      d[i] = 6.0 * (y_[i + 2] - 2.0 * y_[i + 1] + y_[i]);
    c[0] = 1.0 / 4.0;
    d[0] = d[0] / 4.0;
    for (std::size_t i = 1; i < k; ++i) {
      double w = 4.0 - c[i - 1];
      c[i] = 1.0 / w;
      d[i] = (d[i] - d[i - 1]) / w;
    }
    m_[k] = d[k - 1];
    for (std::size_t i = k - 1; i-- > 0;) m_[i + 1] = d[i] - c[i] * m_[i + 2];
  }

  double operator()(double x) const {
    std::size_t n = y_.size();
    std::size_t i;
    if (x <= 0.0)
      i = 0;
    else if (x >= static_cast<double>(n - 2))
      i = n - 2;
    else
      i = static_cast<std::size_t>(x);
    double t = x - static_cast<double>(i);
    double u = 1.0 - t;
    return m_[i] / 6.0 * (u * u * u - u) + m_[i + 1] / 6.0 * (t * t * t - t) + y_[i] * u +
           y_[i + 1] * t;
  }

private:
  std::vector<double> y_;
  std::vector<double> m_; // second derivatives at nodes
};

/// Densifies one axis by an integer factor: n nodes -> n*factor samples, with
/// output index j mapping to source coordinate j/factor (nodes land exactly
/// on multiples of factor).
inline std::vector<double> spline_densify(const std::vector<double>& values, int factor) {
  require_arg(factor >= 1, "factor must be at least 1");
  NaturalCubicSpline s(values);
  std::vector<double> out(values.size() * static_cast<std::size_t>(factor));
  for (std::size_t j = 0; j < out.size(); ++j)
    out[j] = s(static_cast<double>(j) / static_cast<double>(factor));
  return out;
}

/// Separable bicubic-spline densification of a rows x cols grid (row-major).
inline std::vector<double> spline_densify_grid(const std::vector<double>& grid, int rows, int cols,
                                               int factor) {
  require_arg(rows >= 2 && cols >= 2, "grid must be at least 2x2");
  require_arg(static_cast<std::size_t>(rows) * cols == grid.size(), "grid size mismatch");
  int out_cols = cols * factor;
  int out_rows = rows * factor;

  // Rows first, then columns; the tensor-product interpolant is order-independent.
  std::vector<double> wide(static_cast<std::size_t>(rows) * out_cols);
  std::vector<double> row(cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) row[c] = grid[static_cast<std::size_t>(r) * cols + c];
    auto dense = spline_densify(row, factor);
    std::copy(dense.begin(), dense.end(), wide.begin() + static_cast<std::size_t>(r) * out_cols);
  }
  std::vector<double> out(static_cast<std::size_t>(out_rows) * out_cols);
  std::vector<double> col(rows);
  for (int c = 0; c < out_cols; ++c) {
    for (int r = 0; r < rows; ++r) col[r] = wide[static_cast<std::size_t>(r) * out_cols + c];
    auto dense = spline_densify(col, factor);
    for (int r = 0; r < out_rows; ++r) out[static_cast<std::size_t>(r) * out_cols + c] = dense[r];
  }
  return out;
}

} // namespace fes
