#pragma once

#include "moebound/numerics.hpp"
#include "moebound/rng.hpp"

namespace moebound {

struct SinkhornConfig {
  std::size_t max_iters = 1000;
  double tolerance = 1e-9;
};

// Largest absolute deviation of any row or column sum from 1.
double doubly_stochastic_deviation(const Mat& m);

bool is_doubly_stochastic(const Mat& m, double tol);

// Projects a strictly positive square matrix onto the doubly stochastic
// polytope by alternating row and column normalization. Throws DomainError
// on non-positive entries, ConvergenceError past max_iters.
Mat sinkhorn_project(const Mat& m, const SinkhornConfig& cfg = {});

// Random strictly positive matrix pushed through sinkhorn_project; used for
// fixed stream-mixing components.
Mat random_doubly_stochastic(std::size_t n, Rng& rng, const SinkhornConfig& cfg = {});

// One residual mixing step: out = mix * features, rows of `features` being
// the streams. mix must be doubly stochastic; column means and the max-norm
// bound of the features are then conserved by construction.
Mat mixed_residual_step(const Mat& features, const Mat& mix, double mix_tol = 1e-6);

}  // namespace moebound
