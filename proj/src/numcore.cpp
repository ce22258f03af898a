#include <algorithm>
#include <cmath>

#include "kids/errors.hpp"
#include "kids/numcore.hpp"

namespace kids {

double grad_check(const std::function<double(const Mat64&)>& f,
                  const Mat64& point, const Mat64& analytic_grad, double eps) {
  if (!(eps > 0.0)) {
    throw std::invalid_argument("grad_check: eps must be > 0");
  }
  if (point.rows != analytic_grad.rows || point.cols != analytic_grad.cols) {
    throw std::invalid_argument("grad_check: gradient shape " +
                                analytic_grad.shape_str() +
                                " does not match point " + point.shape_str());
  }
  Mat64 perturbed = point;
  double max_rel = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = point.data[i];
    perturbed.data[i] = orig + eps;
    const double f_plus = f(perturbed);
    perturbed.data[i] = orig - eps;
    const double f_minus = f(perturbed);
    perturbed.data[i] = orig;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus)) {
      throw NumericError("grad_check: non-finite function value at element " +
                         std::to_string(i));
    }
    const double g_fd = (f_plus - f_minus) / (2.0 * eps);
    const double g_an = analytic_grad.data[i];
    const double denom = std::max(1e-8, std::abs(g_fd) + std::abs(g_an));
    max_rel = std::max(max_rel, std::abs(g_fd - g_an) / denom);
  }
  return max_rel;
}

bool solve_linear(Mat64 a, std::vector<double> b, std::vector<double>& x) {
  const std::size_t n = a.rows;
  if (a.cols != n || b.size() != n) {
    throw std::invalid_argument("solve_linear: system shape mismatch");
  }
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    double best = std::abs(a(col, col));
    for (std::size_t r = col + 1; r < n; ++r) {
      const double cand = std::abs(a(r, col));
      if (cand > best) {
        best = cand;
        pivot = r;
      }
    }
    if (best < 1e-12) return false;
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(pivot, j), a(col, j));
      std::swap(b[pivot], b[col]);
    }
    const double inv = 1.0 / a(col, col);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double factor = a(r, col) * inv;
      if (factor == 0.0) continue;
      for (std::size_t j = col; j < n; ++j) a(r, j) -= factor * a(col, j);
      b[r] -= factor * b[col];
    }
  }
  x.assign(n, 0.0);
  for (std::size_t ri = n; ri-- > 0;) {
    double acc = b[ri];
    for (std::size_t j = ri + 1; j < n; ++j) acc -= a(ri, j) * x[j];
    x[ri] = acc / a(ri, ri);
  }
  return true;
}

}  // namespace kids
