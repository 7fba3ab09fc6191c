#include <cmath>
#include <cstdint>
#include <map>
#include <set>

#include "doctest.h"
#include "moebound/numerics.hpp"
#include "moebound/rng.hpp"

using namespace moebound;

namespace {

constexpr double kLn2 = 0.6931471805599453;
constexpr double kLn4 = 1.3862943611198906;

MlpParams two_layer_fixture() {
  // 2-2-2 tanh net, all values hand-picked.
  MlpParams p;
  p.weights.push_back(Mat(2, 2));
  p.weights[0].at(0, 0) = 0.5;
  p.weights[0].at(0, 1) = -0.25;
  p.weights[0].at(1, 0) = 0.1;
  p.weights[0].at(1, 1) = 0.3;
  p.biases.push_back({0.1, -0.2});
  p.weights.push_back(Mat(2, 2));
  p.weights[1].at(0, 0) = 1.0;
  p.weights[1].at(0, 1) = -1.0;
  p.weights[1].at(1, 0) = 0.5;
  p.weights[1].at(1, 1) = 0.25;
  p.biases.push_back({0.05, -0.05});
  return p;
}

}  // namespace

TEST_CASE("rng determinism and stream independence") {
  Rng a(123), b(123);
  for (int i = 0; i < 64; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng parent(7);
  std::uint64_t before = Rng(7).next_u64();
  (void)parent.split(3);
  (void)parent.split(4);
  CHECK(parent.next_u64() == before);  // split never advances the parent

  Rng c(9);
  for (int i = 0; i < 1000; ++i) {
    double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  Rng d(11);
  for (int i = 0; i < 1000; ++i) CHECK(d.index(17) < 17);

  std::vector<int> items = {1, 2, 3, 4, 5, 6, 7};
  std::vector<int> shuffled = items;
  Rng e(13);
  e.shuffle(shuffled);
  std::multiset<int> ms_a(items.begin(), items.end());
  std::multiset<int> ms_b(shuffled.begin(), shuffled.end());
  CHECK(ms_a == ms_b);
}

TEST_CASE("softmax fixtures") {
  Vec p = softmax({0.0, 0.0});
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-15));

  Vec q = softmax({kLn2, 0.0});
  CHECK(q[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(q[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("softmax stability and domain") {
  // Max-shifted: gigantic logits stay finite, shift cancels exactly.
  Vec big = softmax({1000.0, 1000.0 + kLn2});
  CHECK(big[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(big[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  CHECK_THROWS_AS(softmax({1.0, std::nan("")}), DomainError);
  CHECK_THROWS_AS(softmax(Vec{}), DimensionError);
}

TEST_CASE("entropy fixtures") {
  CHECK(entropy({0.25, 0.25, 0.25, 0.25}) == doctest::Approx(kLn4).epsilon(1e-15));
  CHECK(entropy({0.0, 1.0, 0.0}) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(entropy({0.75, 0.25}) == doctest::Approx(0.5623351446188083).epsilon(1e-15));
  CHECK_THROWS_AS(entropy({0.9, 0.2}), DomainError);       // off the simplex
  CHECK_THROWS_AS(entropy({1.2, -0.2}), DomainError);      // outside [0, 1]
}

TEST_CASE("kl divergence fixtures") {
  CHECK(kl_divergence({0.3, 0.7}, {0.3, 0.7}) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(kl_divergence({0.5, 0.5}, {0.75, 0.25}) ==
        doctest::Approx(0.14384103622589042).epsilon(1e-15));
  CHECK_THROWS_AS(kl_divergence({0.5, 0.5}, {1.0, 0.0}), DomainError);  // missing support
  CHECK_THROWS_AS(kl_divergence({0.5, 0.5}, {0.2, 0.3, 0.5}), DimensionError);
}

TEST_CASE("simplex invariant sweep") {
  // Reduced copy of the 10k acceptance sweep; full count runs there.
  Rng rng(2024);
  for (int iter = 0; iter < 1000; ++iter) {
    std::size_t dims = 2 + rng.index(7);
    Vec logits(dims), shifted(dims);
    double shift = rng.uniform(-5.0, 5.0);
    for (std::size_t i = 0; i < dims; ++i) {
      logits[i] = rng.uniform(-10.0, 10.0);
      shifted[i] = logits[i] + shift;
    }
    Vec p = softmax(logits);
    double sum = 0.0;
    for (double v : p) {
      CHECK(v > 0.0);
      CHECK(v < 1.0);
      sum += v;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    double h = entropy(p);
    CHECK(h >= -1e-12);
    CHECK(h <= std::log(static_cast<double>(dims)) + 1e-12);
    // Shift invariance of softmax carries over to entropy.
    CHECK(entropy(softmax(shifted)) == doctest::Approx(h).epsilon(1e-9));
    CHECK(kl_divergence(p, p) == doctest::Approx(0.0).epsilon(1e-12));
    // H(p) = ln C - KL(p || uniform).
    Vec u(dims, 1.0 / static_cast<double>(dims));
    CHECK(std::log(static_cast<double>(dims)) - kl_divergence(p, u) ==
          doctest::Approx(h).epsilon(1e-9));
  }
}

TEST_CASE("mlp forward degenerate shapes") {
  // All-zero weights: logits equal the last bias for any input.
  MlpParams p = two_layer_fixture();
  for (Mat& w : p.weights) w = Mat(w.rows, w.cols, 0.0);
  p.biases[0] = {0.0, 0.0};
  p.biases[1] = {0.7, -1.3};
  Vec out = mlp_forward(p, {3.0, -4.0});
  CHECK(out[0] == 0.7);
  CHECK(out[1] == -1.3);

  // Single linear layer, identity weights: logits == x exactly.
  MlpParams lin;
  lin.weights.push_back(Mat(3, 3));
  for (std::size_t i = 0; i < 3; ++i) lin.weights[0].at(i, i) = 1.0;
  lin.biases.push_back({0.0, 0.0, 0.0});
  Vec x = {0.125, -2.5, 17.0};
  CHECK(mlp_forward(lin, x) == x);
}

TEST_CASE("mlp forward hand-computed fixture") {
  MlpParams p = two_layer_fixture();
  Vec out = mlp_forward(p, {0.3, -0.7});
  CHECK(out[0] == doctest::Approx(0.813841752525997).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(0.05989027557946014).epsilon(1e-15));
}

TEST_CASE("mlp backward zero-input first layer gradient") {
  MlpParams p = two_layer_fixture();
  p.biases[0] = {0.0, 0.0};
  ForwardCache cache;
  Vec logits = mlp_forward(p, {0.0, 0.0}, &cache);
  SoftmaxXent xent = softmax_cross_entropy(logits, 0);
  MlpParams g = mlp_backward(p, cache, xent.dlogits);
  // dL/dW0 = delta * x^T vanishes with x = 0; the bias gradient need not.
  for (double v : g.weights[0].values) CHECK(v == 0.0);
}

TEST_CASE("sgd step") {
  MlpParams p;
  p.weights.push_back(Mat(1, 1, 1.0));
  p.biases.push_back({0.0});
  MlpParams g = zeros_like(p);
  g.weights[0].at(0, 0) = 0.5;

  OptimizerState tiny{1e-300, 0};
  MlpParams frozen = p;
  sgd_step(frozen, g, tiny);
  CHECK(frozen.weights[0].at(0, 0) == 1.0);  // below double resolution

  OptimizerState opt{0.1, 0};
  sgd_step(p, g, opt);
  CHECK(p.weights[0].at(0, 0) == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(opt.step_count == 1);
}

TEST_CASE("softmax cross entropy values") {
  SoftmaxXent s = softmax_cross_entropy({std::log(3.0), 0.0}, 0);
  CHECK(s.loss == doctest::Approx(-std::log(0.75)).epsilon(1e-14));
  CHECK(s.probs[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(s.dlogits[0] == doctest::Approx(-0.25).epsilon(1e-14));
  CHECK(s.dlogits[1] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK_THROWS_AS(softmax_cross_entropy({0.0, 0.0}, 5), LookupError);
}

TEST_CASE("grad check linear model at quadratic loss") {
  // Loss 0.5 * ||Wx + b - t||^2 has an exact analytic gradient; central
  // differences agree to near machine precision.
  Rng rng(31);
  MlpParams p = make_mlp({3, 2}, rng);
  Vec x = {0.3, -1.1, 0.8};
  Vec target = {0.25, -0.5};
  auto loss = [&](const MlpParams& q) {
    Vec out = mlp_forward(q, x);
    double l = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      l += 0.5 * (out[i] - target[i]) * (out[i] - target[i]);
    }
    return l;
  };
  ForwardCache cache;
  Vec out = mlp_forward(p, x, &cache);
  Vec dlogits(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) dlogits[i] = out[i] - target[i];
  MlpParams g = mlp_backward(p, cache, dlogits);
  GradCheckReport rep = grad_check(p, loss, g, 1e-8);
  CHECK(rep.pass);
  CHECK(rep.max_relative_error < 1e-8);
}

TEST_CASE("grad check tanh net with cross entropy") {
  Rng rng(32);
  MlpParams p = make_mlp({4, 8, 3}, rng);
  Vec x = {0.2, -0.4, 1.3, 0.05};
  std::size_t target = 2;
  auto loss = [&](const MlpParams& q) {
    return softmax_cross_entropy(mlp_forward(q, x), target).loss;
  };
  ForwardCache cache;
  Vec logits = mlp_forward(p, x, &cache);
  MlpParams g = mlp_backward(p, cache, softmax_cross_entropy(logits, target).dlogits);

  GradCheckReport rep = grad_check(p, loss, g, 1e-4);
  CHECK(rep.pass);

  // Corrupting a single analytic entry must trip the check.
  MlpParams bad = g;
  bad.weights[0].at(0, 0) *= 2.0;
  GradCheckReport rep_bad = grad_check(p, loss, bad, 1e-4);
  CHECK_FALSE(rep_bad.pass);
}

TEST_CASE("finite checks reject poisoned tensors") {
  Mat m(2, 2, 1.0);
  m.at(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(check_finite(m, "m"), DomainError);
  CHECK_THROWS_AS(mat_vec(Mat(2, 3), Vec{1.0, 2.0}), DimensionError);
}
