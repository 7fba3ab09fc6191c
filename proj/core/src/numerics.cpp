#include "moebound/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace moebound {

namespace {

constexpr double kSimplexTol = 1e-9;

std::string shape_str(const Mat& m) {
  return std::to_string(m.rows) + "x" + std::to_string(m.cols);
}

}  // namespace

void check_finite(const Vec& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw DomainError(std::string(what) + ": non-finite entry");
    }
  }
}

void check_finite(const Mat& m, const char* what) {
  check_finite(m.values, what);
}

Vec mat_vec(const Mat& m, const Vec& x) {
  if (x.size() != m.cols) {
    throw DimensionError("mat_vec: " + shape_str(m) + " times vector of length " +
                         std::to_string(x.size()));
  }
  Vec y(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double acc = 0.0;
    const double* row = m.values.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

Vec mat_tvec(const Mat& m, const Vec& y) {
  if (y.size() != m.rows) {
    throw DimensionError("mat_tvec: " + shape_str(m) + "^T times vector of length " +
                         std::to_string(y.size()));
  }
  Vec x(m.cols, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.values.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) x[c] += row[c] * y[r];
  }
  return x;
}

Mat mat_mul(const Mat& a, const Mat& b) {
  if (a.cols != b.rows) {
    throw DimensionError("mat_mul: " + shape_str(a) + " times " + shape_str(b));
  }
  Mat out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
    }
  }
  return out;
}

Vec softmax(const Vec& logits) {
  if (logits.empty()) throw DimensionError("softmax: empty input");
  check_finite(logits, "softmax");
  double m = *std::max_element(logits.begin(), logits.end());
  Vec p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

double entropy(const Vec& p) {
  if (p.empty()) throw DimensionError("entropy: empty input");
  check_finite(p, "entropy");
  double sum = 0.0;
  for (double v : p) {
    if (v < 0.0 || v > 1.0) throw DomainError("entropy: entry outside [0, 1]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSimplexTol) {
    throw DomainError("entropy: mass sums to " + std::to_string(sum) + ", not 1");
  }
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double kl_divergence(const Vec& p, const Vec& q) {
  if (p.size() != q.size()) {
    throw DimensionError("kl_divergence: length mismatch " + std::to_string(p.size()) +
                         " vs " + std::to_string(q.size()));
  }
  // Reuse the simplex checks; entropy() validates both distributions.
  (void)entropy(p);
  (void)entropy(q);
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      if (q[i] <= 0.0) {
        throw DomainError("kl_divergence: q lacks support at index " + std::to_string(i));
      }
      d += p[i] * std::log(p[i] / q[i]);
    }
  }
  return d < 0.0 ? 0.0 : d;  // clip float dust on identical inputs
}

void MlpParams::validate() const {
  if (weights.empty()) throw DimensionError("mlp: no layers");
  if (weights.size() != biases.size()) {
    throw DimensionError("mlp: " + std::to_string(weights.size()) + " weight blocks vs " +
                         std::to_string(biases.size()) + " bias blocks");
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const Mat& w = weights[l];
    if (w.rows == 0 || w.cols == 0) throw DimensionError("mlp: empty layer " + std::to_string(l));
    if (w.values.size() != w.rows * w.cols) {
      throw DimensionError("mlp: layer " + std::to_string(l) + " storage mismatch");
    }
    if (biases[l].size() != w.rows) {
      throw DimensionError("mlp: layer " + std::to_string(l) + " bias length " +
                           std::to_string(biases[l].size()) + " vs " + std::to_string(w.rows) +
                           " rows");
    }
    if (l > 0 && w.cols != weights[l - 1].rows) {
      throw DimensionError("mlp: layer " + std::to_string(l) + " input " + std::to_string(w.cols) +
                           " vs previous output " + std::to_string(weights[l - 1].rows));
    }
  }
  if (mix_streams > 0) {
    if (weights.size() < 2) throw DimensionError("mlp: stream mixing needs a hidden layer");
    std::size_t width = weights[0].rows;
    if (width % mix_streams != 0) {
      throw DimensionError("mlp: hidden width " + std::to_string(width) +
                           " not divisible into " + std::to_string(mix_streams) + " streams");
    }
    if (mix.rows != mix_streams || mix.cols != mix_streams) {
      throw DimensionError("mlp: mix matrix is " + shape_str(mix) + ", want " +
                           std::to_string(mix_streams) + "x" + std::to_string(mix_streams));
    }
  }
}

MlpParams make_mlp(const std::vector<std::size_t>& layer_dims, Rng& rng) {
  if (layer_dims.size() < 2) throw DimensionError("make_mlp: need at least input and output dims");
  MlpParams p;
  for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
    std::size_t in = layer_dims[l], out = layer_dims[l + 1];
    if (in == 0 || out == 0) throw DimensionError("make_mlp: zero layer width");
    Mat w(out, in);
    double s = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& v : w.values) v = rng.uniform(-s, s);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(out, 0.0);
  }
  return p;
}

MlpParams zeros_like(const MlpParams& p) {
  MlpParams z;
  for (const Mat& w : p.weights) z.weights.emplace_back(w.rows, w.cols, 0.0);
  for (const Vec& b : p.biases) z.biases.emplace_back(b.size(), 0.0);
  z.mix_streams = p.mix_streams;
  z.mix = Mat(p.mix.rows, p.mix.cols, 0.0);
  return z;
}

namespace {

// out = mix * reshape(t, streams x seg), flattened back.
Vec apply_mix(const Mat& mix, std::size_t streams, const Vec& t) {
  std::size_t seg = t.size() / streams;
  Vec out(t.size(), 0.0);
  for (std::size_t s = 0; s < streams; ++s) {
    for (std::size_t r = 0; r < streams; ++r) {
      double m = mix.at(s, r);
      if (m == 0.0) continue;
      for (std::size_t j = 0; j < seg; ++j) out[s * seg + j] += m * t[r * seg + j];
    }
  }
  return out;
}

Vec apply_mix_transpose(const Mat& mix, std::size_t streams, const Vec& d) {
  std::size_t seg = d.size() / streams;
  Vec out(d.size(), 0.0);
  for (std::size_t s = 0; s < streams; ++s) {
    for (std::size_t r = 0; r < streams; ++r) {
      double m = mix.at(s, r);
      if (m == 0.0) continue;
      for (std::size_t j = 0; j < seg; ++j) out[r * seg + j] += m * d[s * seg + j];
    }
  }
  return out;
}

}  // namespace

Vec mlp_forward(const MlpParams& params, const Vec& x, ForwardCache* cache) {
  params.validate();
  if (x.size() != params.input_dim()) {
    throw DimensionError("mlp_forward: input length " + std::to_string(x.size()) + ", net wants " +
                         std::to_string(params.input_dim()));
  }
  check_finite(x, "mlp_forward");
  if (cache) {
    cache->input = x;
    cache->pre.clear();
    cache->tanh_out.clear();
    cache->act.clear();
  }
  Vec a = x;
  std::size_t last = params.num_layers() - 1;
  for (std::size_t l = 0; l <= last; ++l) {
    Vec z = mat_vec(params.weights[l], a);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += params.biases[l][i];
    if (cache) cache->pre.push_back(z);
    if (l == last) {
      a = std::move(z);
      break;
    }
    Vec t(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) t[i] = std::tanh(z[i]);
    if (cache) cache->tanh_out.push_back(t);
    if (l == 0 && params.mix_streams > 0) {
      a = apply_mix(params.mix, params.mix_streams, t);
    } else {
      a = std::move(t);
    }
    if (cache) cache->act.push_back(a);
  }
  return a;
}

MlpParams mlp_backward(const MlpParams& params, const ForwardCache& cache, const Vec& dlogits) {
  if (dlogits.size() != params.output_dim()) {
    throw DimensionError("mlp_backward: dlogits length " + std::to_string(dlogits.size()));
  }
  MlpParams grads = zeros_like(params);
  std::size_t last = params.num_layers() - 1;
  Vec delta = dlogits;
  for (std::size_t l = last + 1; l-- > 0;) {
    const Vec& in = (l == 0) ? cache.input : cache.act[l - 1];
    Mat& gw = grads.weights[l];
    for (std::size_t r = 0; r < gw.rows; ++r) {
      for (std::size_t c = 0; c < gw.cols; ++c) gw.at(r, c) = delta[r] * in[c];
    }
    grads.biases[l] = delta;
    if (l == 0) break;
    Vec d = mat_tvec(params.weights[l], delta);
    // Back through the mixing step (layer 0 activation only), then tanh.
    if (l - 1 == 0 && params.mix_streams > 0) {
      d = apply_mix_transpose(params.mix, params.mix_streams, d);
    }
    const Vec& t = cache.tanh_out[l - 1];
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - t[i] * t[i];
    delta = std::move(d);
  }
  return grads;
}

void accumulate(MlpParams& into, const MlpParams& grads, double scale) {
  if (into.weights.size() != grads.weights.size()) {
    throw DimensionError("accumulate: layer count mismatch");
  }
  for (std::size_t l = 0; l < into.weights.size(); ++l) {
    if (into.weights[l].rows != grads.weights[l].rows ||
        into.weights[l].cols != grads.weights[l].cols) {
      throw DimensionError("accumulate: shape mismatch at layer " + std::to_string(l));
    }
    for (std::size_t i = 0; i < into.weights[l].values.size(); ++i) {
      into.weights[l].values[i] += scale * grads.weights[l].values[i];
    }
    for (std::size_t i = 0; i < into.biases[l].size(); ++i) {
      into.biases[l][i] += scale * grads.biases[l][i];
    }
  }
}

void sgd_step(MlpParams& params, const MlpParams& grads, OptimizerState& state) {
  accumulate(params, grads, -state.learning_rate);
  state.step_count += 1;
}

SoftmaxXent softmax_cross_entropy(const Vec& logits, std::size_t target) {
  if (target >= logits.size()) {
    throw LookupError("softmax_cross_entropy: target " + std::to_string(target) +
                      " out of range for " + std::to_string(logits.size()) + " classes");
  }
  SoftmaxXent out;
  out.probs = softmax(logits);
  double pt = std::max(out.probs[target], 1e-300);
  out.loss = -std::log(pt);
  out.dlogits = out.probs;
  out.dlogits[target] -= 1.0;
  return out;
}

namespace {

struct CoordRef {
  std::size_t layer;
  bool is_bias;
  std::size_t offset;
};

double* coord_ptr(MlpParams& p, const CoordRef& c) {
  return c.is_bias ? &p.biases[c.layer][c.offset] : &p.weights[c.layer].values[c.offset];
}

const double* coord_ptr(const MlpParams& p, const CoordRef& c) {
  return c.is_bias ? &p.biases[c.layer][c.offset] : &p.weights[c.layer].values[c.offset];
}

}  // namespace

GradCheckReport grad_check(const MlpParams& params,
                           const std::function<double(const MlpParams&)>& loss,
                           const MlpParams& analytic_grad, double tolerance, double epsilon,
                           std::size_t max_coords, std::uint64_t sample_seed) {
  params.validate();
  std::vector<CoordRef> coords;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    for (std::size_t i = 0; i < params.weights[l].values.size(); ++i) {
      coords.push_back({l, false, i});
    }
    for (std::size_t i = 0; i < params.biases[l].size(); ++i) {
      coords.push_back({l, true, i});
    }
  }
  if (max_coords > 0 && coords.size() > max_coords) {
    Rng rng(sample_seed);
    rng.shuffle(coords);
    coords.resize(max_coords);
  }
  MlpParams probe = params;
  GradCheckReport report;
  for (const CoordRef& c : coords) {
    double* slot = coord_ptr(probe, c);
    double saved = *slot;
    *slot = saved + epsilon;
    double up = loss(probe);
    *slot = saved - epsilon;
    double down = loss(probe);
    *slot = saved;
    double fd = (up - down) / (2.0 * epsilon);
    double an = *coord_ptr(analytic_grad, c);
    double denom = std::max({1e-8, std::abs(fd), std::abs(an)});
    double rel = std::abs(fd - an) / denom;
    report.max_relative_error = std::max(report.max_relative_error, rel);
    report.coords_checked += 1;
  }
  report.pass = report.max_relative_error <= tolerance;
  return report;
}

}  // namespace moebound
