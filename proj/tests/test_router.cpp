#include <cmath>

#include "doctest.h"
#include "moebound/router.hpp"

using namespace moebound;

namespace {

constexpr double kLn2 = 0.6931471805599453;
constexpr double kLn4 = 1.3862943611198906;

std::vector<ExpertStats> line_of_centroids(std::size_t k, double spacing) {
  // Unit-variance experts on a 1D lattice embedded in 2D.
  std::vector<ExpertStats> stats(k);
  for (std::size_t i = 0; i < k; ++i) {
    stats[i].centroid = {spacing * static_cast<double>(i), 0.0};
    stats[i].variance = {1.0, 1.0};
    stats[i].sample_count = 10;
  }
  return stats;
}

}  // namespace

TEST_CASE("top-k selection") {
  auto [all, w_all] = select_top_k({0.1, 0.4, 0.2, 0.3}, 4);
  CHECK(all == std::vector<std::size_t>{1, 3, 2, 0});
  // Renormalization divides by the float sum, so compare up to rounding.
  REQUIRE(w_all.size() == 4);
  Vec expect_all = {0.4, 0.3, 0.2, 0.1};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(w_all[i] == doctest::Approx(expect_all[i]).epsilon(1e-14));
  }

  auto [one, w_one] = select_top_k({0.1, 0.7, 0.2}, 1);
  CHECK(one == std::vector<std::size_t>{1});
  CHECK(w_one == Vec{1.0});

  auto [two, w_two] = select_top_k({0.4, 0.4, 0.2}, 2);
  CHECK(two == std::vector<std::size_t>{0, 1});  // tie goes to the lower id
  CHECK(w_two[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(w_two[1] == doctest::Approx(0.5).epsilon(1e-15));

  CHECK_THROWS_AS(select_top_k({0.5, 0.5}, 0), ParameterError);
  CHECK_THROWS_AS(select_top_k({0.5, 0.5}, 3), ParameterError);
}

TEST_CASE("distance margin") {
  CHECK(distance_margin({2.0, 2.0, 5.0}) == 0.0);  // two nearest equidistant
  CHECK(distance_margin({1.0, 3.0}) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  // Margin is clamped to [0, 1] and safe near zero distances.
  CHECK(distance_margin({0.0, 0.0}) == 0.0);
  CHECK(distance_margin({0.0, 5.0}) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("affinity kernel saturates at the centroid") {
  std::vector<ExpertStats> stats = line_of_centroids(3, 8.0);  // 8 sigma apart
  RouterSettings settings;  // sigma 1.0
  RouterTrainHyperparams hp;
  RouterModel router = make_router(2, 3, settings, hp);
  RoutingDecision d = route(router, stats, {0.0, 0.0});
  CHECK(d.raw_affinities[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.raw_affinities[1] < 0.01);
  CHECK(d.raw_affinities[2] < 0.01);

  // Exactly between experts 0 and 1 the distance margin vanishes.
  RoutingDecision mid = route(router, stats, {4.0, 0.0});
  CHECK(mid.margin == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("load balance loss fixtures") {
  // Uniform gate weights with top-1 spread evenly across K experts.
  std::size_t k = 4;
  std::vector<RoutingDecision> uniform(k);
  for (std::size_t i = 0; i < k; ++i) {
    uniform[i].gate_weights = Vec(k, 1.0 / static_cast<double>(k));
    uniform[i].selected = {i};
  }
  CHECK(load_balance_loss(uniform, k) == doctest::Approx(1.0).epsilon(1e-12));

  // Everything on one expert with full weight.
  std::vector<RoutingDecision> hot(3);
  for (RoutingDecision& d : hot) {
    d.gate_weights = {1.0, 0.0, 0.0, 0.0};
    d.selected = {0};
  }
  CHECK(load_balance_loss(hot, 4) == doctest::Approx(4.0).epsilon(1e-12));

  // Any routing pattern scores at least 1 (Cauchy-Schwarz floor).
  Rng rng(71);
  std::vector<RoutingDecision> batch(64);
  for (RoutingDecision& d : batch) {
    Vec logits(4);
    for (double& v : logits) v = rng.uniform(-2.0, 2.0);
    d.gate_weights = softmax(logits);
    std::size_t best = 0;
    for (std::size_t i = 1; i < 4; ++i) {
      if (d.gate_weights[i] > d.gate_weights[best]) best = i;
    }
    d.selected = {best};
  }
  CHECK(load_balance_loss(batch, 4) >= 1.0 - 1e-12);
}

TEST_CASE("boundary loss fixtures") {
  CHECK(boundary_loss(1.0, 0.0) == 0.0);          // decisive margin, any entropy
  CHECK(boundary_loss(1.0, 2.0) == 0.0);
  CHECK(boundary_loss(0.0, 0.0) == doctest::Approx(kLn2).epsilon(1e-15));
  CHECK(boundary_loss(0.0, kLn2) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("coverage loss fixtures") {
  double tau = 0.5;
  CHECK(coverage_loss({0.9, 0.1}, 0.0, tau) == 0.0);  // covered, confident is fine
  // Nothing covers the query and the gate is one-hot over 4 experts.
  CHECK(coverage_loss({0.0, 0.0, 0.0, 0.0}, 0.0, tau) ==
        doctest::Approx(0.5 * kLn4).epsilon(1e-12));
  // Uncovered but maximally hesitant: no penalty left.
  CHECK(coverage_loss({0.0, 0.0, 0.0, 0.0}, kLn4, tau) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("zero lambdas reduce training to cross entropy") {
  // Small synthetic routing problem: three well-separated expert regions.
  Rng rng(72);
  std::vector<ExpertStats> stats = line_of_centroids(3, 4.0);
  std::vector<LabeledExample> train;
  for (std::size_t i = 0; i < 3; ++i) {
    for (int s = 0; s < 40; ++s) {
      LabeledExample ex;
      ex.features = {4.0 * static_cast<double>(i) + rng.gaussian() * 0.3,
                     rng.gaussian() * 0.3};
      ex.owner_domain = static_cast<int>(i);
      ex.case_tag = CaseTag::kInDomain;
      train.push_back(ex);
    }
  }
  MlpParams embed_net;  // identity: features already live in embedding space
  embed_net.weights.push_back(Mat(2, 2));
  embed_net.weights[0].at(0, 0) = 1.0;
  embed_net.weights[0].at(1, 1) = 1.0;
  embed_net.biases.push_back({0.0, 0.0});

  RouterSettings settings;
  settings.lambda_load_balance = 0.0;
  settings.lambda_boundary = 0.0;
  settings.lambda_coverage = 0.0;
  RouterTrainHyperparams hp;
  hp.epochs = 10;
  RouterModel router = make_router(2, 3, settings, hp);
  RouterTrainReport rep = train_router(router, embed_net, stats, train, hp);
  REQUIRE(rep.trace.size() == 10);
  for (const RouterLossTerms& t : rep.trace) {
    CHECK(t.load_balance == 0.0);
    CHECK(t.boundary == 0.0);
    CHECK(t.coverage == 0.0);
    CHECK(t.total == t.task_ce);
  }

  // The trained gate routes each region to its own expert.
  std::size_t hits = 0;
  for (const LabeledExample& ex : train) {
    RoutingDecision d = route(router, stats, embed(embed_net, ex.features));
    hits += d.selected[0] == static_cast<std::size_t>(ex.owner_domain) ? 1 : 0;
  }
  CHECK(static_cast<double>(hits) / static_cast<double>(train.size()) > 0.9);
}

TEST_CASE("routing decision internals are consistent") {
  std::vector<ExpertStats> stats = line_of_centroids(4, 3.0);
  RouterSettings settings;
  settings.top_k = 2;
  RouterTrainHyperparams hp;
  RouterModel router = make_router(2, 4, settings, hp);
  RoutingDecision d = route(router, stats, {1.3, 0.4});

  CHECK(d.centroid_distances.size() == 4);
  CHECK(d.gate_weights.size() == 4);
  CHECK(d.selected.size() == 2);
  double gate_sum = 0.0;
  for (double v : d.gate_weights) gate_sum += v;
  CHECK(gate_sum == doctest::Approx(1.0).epsilon(1e-12));
  double sel_sum = 0.0;
  for (double v : d.selected_weights) sel_sum += v;
  CHECK(sel_sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(d.routing_entropy == doctest::Approx(entropy(d.gate_weights)).epsilon(1e-12));
  for (std::size_t i = 0; i < 4; ++i) {
    double a = std::exp(-d.centroid_distances[i] * d.centroid_distances[i] /
                        (2.0 * settings.kernel_sigma * settings.kernel_sigma));
    CHECK(d.raw_affinities[i] == doctest::Approx(a).epsilon(1e-12));
  }
}
