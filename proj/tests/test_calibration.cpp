#include <cmath>
#include <numeric>

#include "doctest.h"
#include "moebound/calibration.hpp"
#include "moebound/experts.hpp"

using namespace moebound;

namespace {

double mean_nll(const std::vector<Vec>& logits, const std::vector<std::size_t>& labels,
                double temperature) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    Vec p = softmax(apply_temperature(logits[i], temperature));
    total += -std::log(p[labels[i]]);
  }
  return total / static_cast<double>(logits.size());
}

// Logit set whose NLL is stationary at T = 1: four copies of [ln 3, 0] with
// labels 0,0,0,1 make the empirical frequencies match the predictions.
void stationary_set(std::vector<Vec>& logits, std::vector<std::size_t>& labels) {
  for (int i = 0; i < 4; ++i) logits.push_back({std::log(3.0), 0.0});
  labels = {0, 0, 0, 1};
}

}  // namespace

TEST_CASE("apply temperature") {
  Vec z = {1.5, -0.3, 0.2};
  CHECK(softmax(apply_temperature(z, 1.0)) == softmax(z));

  Vec hot = softmax(apply_temperature(z, 1e6));
  for (double v : hot) CHECK(std::abs(v - 1.0 / 3.0) < 1e-4);

  CHECK_THROWS_AS(apply_temperature(z, 0.0), ParameterError);
  CHECK_THROWS_AS(apply_temperature(z, -2.0), ParameterError);
}

TEST_CASE("temperature fit recovers a stationary point") {
  std::vector<Vec> logits;
  std::vector<std::size_t> labels;
  stationary_set(logits, labels);
  TemperatureFit fit = fit_temperature(logits, labels);
  CHECK(std::abs(fit.temperature - 1.0) < 1e-3);
  CHECK(fit.nll_after <= fit.nll_before + 1e-12);

  // Scaling every logit by c moves the optimum to c.
  std::vector<Vec> scaled = logits;
  for (Vec& v : scaled) {
    for (double& x : v) x *= 2.0;
  }
  TemperatureFit fit2 = fit_temperature(scaled, labels);
  CHECK(std::abs(fit2.temperature - 2.0) < 2e-3);
}

TEST_CASE("temperature fit rejects degenerate inputs") {
  CHECK_THROWS_AS(fit_temperature({{1.0, 0.0}}, {0}), TrainingError);  // one sample
  CHECK_THROWS_AS(fit_temperature({{1.0, 0.0}, {0.5, 0.2}}, {0, 0}), TrainingError);
  CHECK_THROWS_AS(fit_temperature({{1.0, 0.0}, {0.5, 0.2}}, {0}), DimensionError);
}

TEST_CASE("adaptive temperature dominates the scalar fit") {
  // Heteroscedastic validation set: confident-and-right cases mixed with
  // saturated-and-wrong ones, so no single T is ideal.
  Rng rng(401);
  std::vector<Vec> logits;
  std::vector<std::size_t> labels;
  for (int i = 0; i < 120; ++i) {
    double spread = (i % 3 == 0) ? 4.0 : 0.7;
    Vec z = {rng.gaussian() * spread, rng.gaussian() * spread, rng.gaussian() * spread};
    std::size_t best = 0;
    for (std::size_t c = 1; c < 3; ++c) {
      if (z[c] > z[best]) best = c;
    }
    bool flip = rng.uniform() < ((i % 3 == 0) ? 0.45 : 0.1);
    logits.push_back(z);
    labels.push_back(flip ? (best + 1) % 3 : best);
  }

  TemperatureFit scalar = fit_temperature(logits, labels);
  AdaptiveTempParams adaptive = fit_adaptive_temperature(logits, labels);
  AdaptiveTempParams again = fit_adaptive_temperature(logits, labels);
  CHECK(adaptive == again);  // grid search is deterministic

  double adaptive_nll = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double t = adaptive_temperature_for(adaptive, logits[i]);
    Vec p = softmax(apply_temperature(logits[i], t));
    adaptive_nll += -std::log(p[labels[i]]);
  }
  adaptive_nll /= static_cast<double>(logits.size());

  // The adaptive family contains every constant map, so its fit can only
  // match or beat the scalar optimum.
  CHECK(adaptive_nll <= scalar.nll_after + 1e-9);
  CHECK(std::abs(mean_nll(logits, labels, scalar.temperature) - scalar.nll_after) < 1e-12);
}

TEST_CASE("confidence penalty fixtures") {
  CHECK(confidence_penalty({0.25, 0.25, 0.25, 0.25}, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(confidence_penalty({1.0, 0.0, 0.0, 0.0}, 1.0) ==
        doctest::Approx(1.3862943611198906).epsilon(1e-12));
  CHECK(confidence_penalty({0.9, 0.1}, 0.0) == 0.0);
}

TEST_CASE("boundary finetune ignores lambda without boundary data") {
  Benchmark bench = build_benchmark(BenchmarkConfig{});
  std::vector<LabeledExample> own;
  for (const LabeledExample& ex : bench.train) {
    if (ex.owner_domain == 0 && ex.case_tag == CaseTag::kInDomain) own.push_back(ex);
  }
  TrainHyperparams thp;
  thp.epochs = 10;
  auto [expert_a, rep_a] = train_expert(0, own, {}, bench.config.classes, thp);
  ExpertModel expert_b = expert_a;

  FinetuneHyperparams fhp;
  fhp.epochs = 3;
  boundary_aware_finetune(expert_a, own, {}, fhp);
  FinetuneHyperparams loud = fhp;
  loud.lambda_flat = 7.0;
  boundary_aware_finetune(expert_b, own, {}, loud);
  CHECK(expert_a == expert_b);  // lambda only acts through the boundary stream
}

TEST_CASE("zero lambda reduces to plain fine-tuning on in-domain data") {
  // With lambda_flat = 0, boundary items keep their batch slots but carry no
  // gradient. At batch size 1 the run must therefore be bit-identical to
  // hand-running cross-entropy SGD over the in-domain items in the same
  // shuffled order.
  Benchmark bench = build_benchmark(BenchmarkConfig{});
  std::vector<LabeledExample> own, boundary;
  const DomainSpec& d0 = bench.domains[0];
  for (const LabeledExample& ex : bench.train) {
    if (ex.owner_domain == 0 && ex.case_tag == CaseTag::kInDomain && own.size() < 60) {
      own.push_back(ex);
    }
    bool shared = std::find(d0.shared_cluster_ids.begin(), d0.shared_cluster_ids.end(),
                            ex.cluster_id) != d0.shared_cluster_ids.end();
    if (ex.case_tag == CaseTag::kBoundary && shared && boundary.size() < 40) {
      boundary.push_back(ex);
    }
  }
  REQUIRE(own.size() == 60);
  REQUIRE(boundary.size() == 40);

  TrainHyperparams thp;
  thp.epochs = 5;
  auto [expert, rep] = train_expert(0, own, {}, bench.config.classes, thp);
  MlpParams manual = expert.net;

  FinetuneHyperparams fhp;
  fhp.lambda_flat = 0.0;
  fhp.epochs = 2;
  fhp.batch_size = 1;
  boundary_aware_finetune(expert, own, boundary, fhp);

  Rng shuffle_rng = Rng(fhp.seed).split(1);
  std::vector<std::size_t> order(own.size() + boundary.size());
  std::iota(order.begin(), order.end(), 0);
  OptimizerState opt{fhp.learning_rate, 0};
  for (std::size_t epoch = 0; epoch < fhp.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t idx : order) {
      if (idx >= own.size()) continue;  // inert boundary slot
      ForwardCache cache;
      Vec logits = mlp_forward(manual, own[idx].features, &cache);
      SoftmaxXent xent = softmax_cross_entropy(logits, own[idx].class_label);
      MlpParams grads = mlp_backward(manual, cache, xent.dlogits);
      sgd_step(manual, grads, opt);
    }
  }
  CHECK(expert.net == manual);
}

TEST_CASE("boundary finetune flattens the boundary only") {
  Benchmark bench = build_benchmark(BenchmarkConfig{});
  std::vector<LabeledExample> own, boundary;
  const DomainSpec& d0 = bench.domains[0];
  for (const LabeledExample& ex : bench.train) {
    if (ex.owner_domain == 0 && ex.case_tag == CaseTag::kInDomain) own.push_back(ex);
    bool shared = std::find(d0.shared_cluster_ids.begin(), d0.shared_cluster_ids.end(),
                            ex.cluster_id) != d0.shared_cluster_ids.end();
    if (ex.case_tag == CaseTag::kBoundary && shared) boundary.push_back(ex);
  }

  TrainHyperparams thp;
  thp.epochs = 50;
  auto [expert, rep] = train_expert(0, own, {}, bench.config.classes, thp);

  FinetuneHyperparams fhp;  // shipped defaults
  FinetuneReport frep = boundary_aware_finetune(expert, own, boundary, fhp);
  CHECK(frep.boundary_entropy_after > frep.boundary_entropy_before);
  CHECK(frep.in_domain_accuracy_before - frep.in_domain_accuracy_after <= 0.02);
}

TEST_CASE("boundary finetune validates its inputs") {
  ExpertModel expert;
  Rng rng(402);
  expert.net = make_mlp({4, 8, 3}, rng);
  LabeledExample ex;
  ex.features = {0.1, 0.2, 0.3, 0.4};
  FinetuneHyperparams fhp;
  CHECK_THROWS_AS(boundary_aware_finetune(expert, {}, {ex}, fhp), TrainingError);
  FinetuneHyperparams bad = fhp;
  bad.lambda_flat = -1.0;
  CHECK_THROWS_AS(boundary_aware_finetune(expert, {ex}, {}, bad), ParameterError);
}
