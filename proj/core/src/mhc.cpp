#include "moebound/mhc.hpp"

#include <cmath>
#include <string>

namespace moebound {

double doubly_stochastic_deviation(const Mat& m) {
  double worst = 0.0;
  for (std::size_t r = 0; r < m.rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) s += m.at(r, c);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  for (std::size_t c = 0; c < m.cols; ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < m.rows; ++r) s += m.at(r, c);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

bool is_doubly_stochastic(const Mat& m, double tol) {
  if (m.rows != m.cols || m.rows == 0) return false;
  for (double v : m.values) {
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
  }
  return doubly_stochastic_deviation(m) <= tol;
}

Mat sinkhorn_project(const Mat& m, const SinkhornConfig& cfg) {
  if (m.rows != m.cols || m.rows == 0) {
    throw DimensionError("sinkhorn_project: matrix is " + std::to_string(m.rows) + "x" +
                         std::to_string(m.cols) + ", want square non-empty");
  }
  for (double v : m.values) {
    if (!std::isfinite(v) || v <= 0.0) {
      throw DomainError("sinkhorn_project: entries must be finite and strictly positive");
    }
  }
  Mat out = m;
  std::size_t n = m.rows;
  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    for (std::size_t r = 0; r < n; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < n; ++c) s += out.at(r, c);
      for (std::size_t c = 0; c < n; ++c) out.at(r, c) /= s;
    }
    for (std::size_t c = 0; c < n; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < n; ++r) s += out.at(r, c);
      for (std::size_t r = 0; r < n; ++r) out.at(r, c) /= s;
    }
    if (doubly_stochastic_deviation(out) <= cfg.tolerance) return out;
  }
  throw ConvergenceError("sinkhorn_project: deviation " +
                         std::to_string(doubly_stochastic_deviation(out)) + " after " +
                         std::to_string(cfg.max_iters) + " iterations");
}

Mat random_doubly_stochastic(std::size_t n, Rng& rng, const SinkhornConfig& cfg) {
  if (n == 0) throw DimensionError("random_doubly_stochastic: n must be positive");
  Mat m(n, n);
  for (double& v : m.values) v = rng.uniform(0.1, 1.0);
  return sinkhorn_project(m, cfg);
}

Mat mixed_residual_step(const Mat& features, const Mat& mix, double mix_tol) {
  if (!is_doubly_stochastic(mix, mix_tol)) {
    throw ParameterError("mixed_residual_step: mix matrix is not doubly stochastic");
  }
  if (mix.cols != features.rows) {
    throw DimensionError("mixed_residual_step: mix is " + std::to_string(mix.rows) + "x" +
                         std::to_string(mix.cols) + " but features have " +
                         std::to_string(features.rows) + " streams");
  }
  check_finite(features, "mixed_residual_step");
  return mat_mul(mix, features);
}

}  // namespace moebound
