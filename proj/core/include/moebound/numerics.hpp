#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "moebound/errors.hpp"
#include "moebound/rng.hpp"

namespace moebound {

using Vec = std::vector<double>;

// Dense row-major matrix. Small and dumb on purpose: every shape in this
// project is desk scale, and explicit loops keep the arithmetic auditable.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), values(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  friend bool operator==(const Mat&, const Mat&) = default;
};

void check_finite(const Vec& v, const char* what);
void check_finite(const Mat& m, const char* what);

Vec mat_vec(const Mat& m, const Vec& x);    // m * x
Vec mat_tvec(const Mat& m, const Vec& y);   // m^T * y
Mat mat_mul(const Mat& a, const Mat& b);

// Numerically stable softmax (max-shifted). Rejects non-finite logits.
Vec softmax(const Vec& logits);

// Shannon entropy in nats; 0 ln 0 = 0. Input must lie on the simplex.
double entropy(const Vec& p);

// KL(p || q) in nats. q must have support wherever p does.
double kl_divergence(const Vec& p, const Vec& q);

// Feedforward net with tanh hidden layers and a linear output layer.
// mix_streams > 0 enables a residual stream-mixing step after the first
// hidden activation: the activation vector is reshaped to (mix_streams x
// width/mix_streams) and left-multiplied by `mix`, which must be doubly
// stochastic. mix is a fixed architectural component, never trained.
struct MlpParams {
  std::vector<Mat> weights;  // weights[l]: (out_l x in_l)
  std::vector<Vec> biases;   // biases[l]: out_l
  std::size_t mix_streams = 0;
  Mat mix;

  std::size_t num_layers() const { return weights.size(); }
  std::size_t input_dim() const { return weights.empty() ? 0 : weights.front().cols; }
  std::size_t output_dim() const { return weights.empty() ? 0 : weights.back().rows; }
  void validate() const;  // throws DimensionError on any shape mismatch

  friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

// Uniform init on [-s, s] with s = sqrt(6 / (in + out)) per layer.
MlpParams make_mlp(const std::vector<std::size_t>& layer_dims, Rng& rng);
MlpParams zeros_like(const MlpParams& p);

struct ForwardCache {
  Vec input;
  std::vector<Vec> pre;       // pre-activation z_l
  std::vector<Vec> tanh_out;  // tanh(z_l) for hidden layers
  std::vector<Vec> act;       // what actually feeds layer l+1 (post-mix for layer 0)
};

Vec mlp_forward(const MlpParams& params, const Vec& x, ForwardCache* cache = nullptr);

// Gradient of a scalar loss w.r.t. all weights and biases, given dL/dlogits.
// Returned gradients mirror the parameter shapes; mix itself gets no
// gradient (it is not a trainable parameter).
MlpParams mlp_backward(const MlpParams& params, const ForwardCache& cache, const Vec& dlogits);

void accumulate(MlpParams& into, const MlpParams& grads, double scale = 1.0);

struct OptimizerState {
  double learning_rate = 0.05;
  std::uint64_t step_count = 0;
};

void sgd_step(MlpParams& params, const MlpParams& grads, OptimizerState& state);

struct SoftmaxXent {
  double loss;
  Vec probs;
  Vec dlogits;  // probs - onehot(target)
};

SoftmaxXent softmax_cross_entropy(const Vec& logits, std::size_t target);

// Central-difference check of an analytic gradient. Coordinates are checked
// exhaustively up to max_coords (0 = all); beyond that a seeded sample is
// used so the check stays cheap on larger nets but remains deterministic.
struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t coords_checked = 0;
  bool pass = false;
};

GradCheckReport grad_check(const MlpParams& params,
                           const std::function<double(const MlpParams&)>& loss,
                           const MlpParams& analytic_grad, double tolerance,
                           double epsilon = 1e-5, std::size_t max_coords = 0,
                           std::uint64_t sample_seed = 17);

}  // namespace moebound
