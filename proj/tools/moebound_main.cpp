// Command line front end: benchmark synthesis, full pipeline runs, replay
// verification, report emission, A/B deltas, and a runtime invariant suite.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "moebound/detection.hpp"
#include "moebound/metrics.hpp"
#include "moebound/mhc.hpp"
#include "moebound/pipeline.hpp"
#include "moebound/report.hpp"
#include "moebound/textio.hpp"

namespace {

using namespace moebound;

ExperimentConfig config_from_option(const std::string& path) {
  if (path.empty()) return ExperimentConfig{};
  return load_experiment_config(path);
}

void print_report_summary(const MetricsReport& r) {
  std::printf("run %s on benchmark %s, seed %llu, %zu test queries\n", r.config_hash.c_str(),
              r.benchmark_hash.c_str(), static_cast<unsigned long long>(r.seed), r.test_count);
  std::printf("detectors (auroc_all / pr_auc_all / auroc_boundary / auroc_gap):\n");
  for (const DetectorRow& d : r.detectors) {
    if (d.available) {
      std::printf("  %-20s %.4f / %.4f / %.4f / %.4f\n", d.name.c_str(), d.auroc_all, d.pr_auc_all,
                  d.auroc_boundary, d.auroc_gap);
    } else {
      std::printf("  %-20s unavailable in this configuration\n", d.name.c_str());
    }
  }
  auto tag_line = [](const char* name, const TagStats& t) {
    std::printf("  %-10s n=%-5zu accuracy %.4f  confidence %.4f  dissociation %+.4f\n", name,
                t.count, t.accuracy, t.mean_confidence, t.dissociation);
  };
  std::printf("phenotype:\n");
  tag_line("in_domain", r.phenotype.in_domain);
  tag_line("boundary", r.phenotype.boundary);
  tag_line("gap", r.phenotype.gap);
  if (r.phenotype.localization_infinite) {
    std::printf("  boundary_localization_ratio: infinite (zero in-domain errors)\n");
  } else if (r.phenotype.boundary_localization_ratio.has_value()) {
    std::printf("  boundary_localization_ratio: %.4f\n", *r.phenotype.boundary_localization_ratio);
  }
  std::printf("ece %.4f  in_domain_test_accuracy %.4f  entropy_distance_spearman %.4f\n",
              r.phenotype.ece, r.in_domain_test_accuracy, r.entropy_distance_spearman);
  if (r.pre_finetune.has_value()) {
    std::printf("pre-finetune: spearman %.4f  in_domain_test_accuracy %.4f\n",
                r.pre_finetune->entropy_distance_spearman, r.pre_finetune->in_domain_test_accuracy);
  }
  std::printf("verdicts:");
  for (const auto& [name, count] : r.monitoring.verdict_counts) {
    std::printf(" %s %zu", name.c_str(), count);
  }
  std::printf("\nactions:");
  for (const auto& [name, count] : r.monitoring.action_counts) {
    std::printf(" %s %zu", name.c_str(), count);
  }
  std::printf("\n");
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
  ExperimentConfig config = config_from_option(config_path);
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw StorageError("cannot create " + out_dir + ": " + ec.message());
  Benchmark bench = build_benchmark(config.benchmark);
  RunPaths paths = run_paths(out_dir);
  write_text_file(paths.config, serialize_experiment_config(config));
  save_benchmark(bench, paths.benchmark);
  std::printf("benchmark %s: %zu clusters, splits train/val/test = %zu/%zu/%zu\n",
              hash_hex(bench.content_hash()).c_str(), bench.clusters.size(), bench.train.size(),
              bench.val.size(), bench.test.size());
  std::printf("wrote %s and %s\n", paths.config.c_str(), paths.benchmark.c_str());
  return 0;
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
  ExperimentConfig config = config_from_option(config_path);
  RunOutcome outcome = run_pipeline(config, out_dir);
  print_report_summary(outcome.report);
  std::printf("artifacts in %s\n", out_dir.c_str());
  return 0;
}

int cmd_eval(const std::string& run_dir) {
  MetricsReport report = replay_run(run_dir);
  std::printf("replay of %s verified: decision log and report match stored bytes\n",
              run_dir.c_str());
  print_report_summary(report);
  return 0;
}

int cmd_report(const std::string& run_dir, const std::string& format) {
  RunPaths paths = run_paths(run_dir);
  MetricsReport report = load_metrics_report(paths.report);
  if (format == "json") {
    std::fputs(metrics_report_to_json(report).c_str(), stdout);
    return 0;
  }
  std::string table_dir = run_dir + "/tables";
  std::error_code ec;
  std::filesystem::create_directories(table_dir, ec);
  if (ec) throw StorageError("cannot create " + table_dir + ": " + ec.message());
  for (const auto& [name, content] : metrics_report_to_csv(report)) {
    std::string path = table_dir + "/" + name;
    write_text_file(path, content);
    std::printf("%s\n", path.c_str());
  }
  return 0;
}

int cmd_ab(const std::string& run_a, const std::string& run_b) {
  MetricsReport a = load_metrics_report(run_paths(run_a).report);
  MetricsReport b = load_metrics_report(run_paths(run_b).report);
  AbComparison cmp = ab_compare(a, b);
  std::fputs(ab_comparison_to_json(cmp).c_str(), stdout);
  return 0;
}

// ---------------------------------------------------------------------------
// selftest: the runtime invariant suite. Exercises the numeric core on
// seeded inputs and confirms the error paths fire. Failures throw, which the
// main() wrapper maps to exit code 2.

void check(bool ok, const std::string& what) {
  if (!ok) throw PipelineError("selftest failed: " + what);
  std::printf("[ok] %s\n", what.c_str());
}

void selftest_simplex_suite() {
  Rng rng(20240901);
  double max_sum_err = 0.0;
  bool shapes_ok = true;
  for (int i = 0; i < 10000; ++i) {
    std::size_t n = 2 + rng.index(7);
    Vec logits(n);
    for (double& v : logits) v = rng.uniform(-10.0, 10.0);
    Vec p = softmax(logits);
    double sum = 0.0;
    for (double v : p) {
      if (v <= 0.0) shapes_ok = false;
      sum += v;
    }
    max_sum_err = std::max(max_sum_err, std::abs(sum - 1.0));
    double h = entropy(p);
    if (h < 0.0 || h > std::log(static_cast<double>(n)) + 1e-9) shapes_ok = false;
    Vec q = softmax([&] {
      Vec other(n);
      for (double& v : other) v = rng.uniform(-10.0, 10.0);
      return other;
    }());
    if (kl_divergence(p, p) > 1e-12) shapes_ok = false;
    if (kl_divergence(p, q) < -1e-12) shapes_ok = false;
    double jsd = jensen_shannon(p, q);
    if (jsd < -1e-12 || jsd > std::log(2.0) + 1e-12) shapes_ok = false;
    if (std::abs(jsd - jensen_shannon(q, p)) > 1e-12) shapes_ok = false;
  }
  check(shapes_ok && max_sum_err < 1e-12,
        "softmax/entropy/kl/jsd invariants on 10000 seeded inputs");
}

// Mean cross entropy over a fixed batch; the loss used for finite-difference
// verification of the backward pass.
void selftest_grad_shapes() {
  struct Shape {
    const char* name;
    std::vector<std::size_t> dims;
    std::size_t mix_streams;
  };
  // Mirrors every net the pipeline instantiates under the default config.
  std::vector<Shape> shapes = {
      {"expert 18-32-3", {18, 32, 3}, 0},
      {"expert 18-32-3 mixed", {18, 32, 3}, 4},
      {"embedding 18-16-8", {18, 16, 8}, 0},
      {"gate 8-16-4", {8, 16, 4}, 0},
      {"meta 14-16-3", {14, 16, 3}, 0},
  };
  for (const Shape& shape : shapes) {
    Rng rng(1000 + shape.mix_streams);
    MlpParams params = make_mlp(shape.dims, rng);
    if (shape.mix_streams > 0) {
      params.mix_streams = shape.mix_streams;
      params.mix = random_doubly_stochastic(shape.mix_streams, rng);
    }
    std::vector<Vec> xs;
    std::vector<std::size_t> ys;
    for (int i = 0; i < 8; ++i) {
      Vec x(shape.dims.front());
      for (double& v : x) v = rng.uniform(-1.0, 1.0);
      xs.push_back(x);
      ys.push_back(rng.index(shape.dims.back()));
    }
    auto loss = [&](const MlpParams& p) {
      double total = 0.0;
      for (std::size_t i = 0; i < xs.size(); ++i) {
        total += softmax_cross_entropy(mlp_forward(p, xs[i]), ys[i]).loss;
      }
      return total / static_cast<double>(xs.size());
    };
    MlpParams analytic = zeros_like(params);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      ForwardCache cache;
      Vec logits = mlp_forward(params, xs[i], &cache);
      SoftmaxXent xent = softmax_cross_entropy(logits, ys[i]);
      accumulate(analytic, mlp_backward(params, cache, xent.dlogits),
                 1.0 / static_cast<double>(xs.size()));
    }
    GradCheckReport rep = grad_check(params, loss, analytic, 1e-4, 1e-5, 200);
    check(rep.pass, std::string("grad check ") + shape.name + " (max rel err " +
                        fmt_double(rep.max_relative_error) + ")");
  }

  // Negative control: a corrupted gradient must be caught, not absorbed.
  Rng rng(77);
  MlpParams params = make_mlp({6, 5, 3}, rng);
  Vec x(6);
  for (double& v : x) v = rng.uniform(-1.0, 1.0);
  auto loss = [&](const MlpParams& p) {
    return softmax_cross_entropy(mlp_forward(p, x), 1).loss;
  };
  ForwardCache cache;
  SoftmaxXent xent = softmax_cross_entropy(mlp_forward(params, x, &cache), 1);
  MlpParams analytic = zeros_like(params);
  accumulate(analytic, mlp_backward(params, cache, xent.dlogits));
  analytic.weights[0].at(0, 0) += 0.25;
  check(!grad_check(params, loss, analytic, 1e-4, 1e-5, 0).pass,
        "corrupted gradient is rejected");
}

void selftest_sinkhorn() {
  Rng rng(3141);
  for (std::size_t n = 2; n <= 16; ++n) {
    Mat m(n, n);
    for (double& v : m.values) v = rng.uniform(0.05, 1.0);
    Mat p = sinkhorn_project(m);
    if (doubly_stochastic_deviation(p) > 1e-9) {
      check(false, "sinkhorn projection " + std::to_string(n) + "x" + std::to_string(n));
    }
    Mat pp = sinkhorn_project(p);
    if (doubly_stochastic_deviation(pp) > 1e-9) {
      check(false, "sinkhorn idempotence " + std::to_string(n));
    }
    // Each factor is stochastic to within the projection tolerance; first
    // order, the deviations add, so the product bound is twice that.
    Mat q = random_doubly_stochastic(n, rng);
    if (doubly_stochastic_deviation(mat_mul(p, q)) > 2e-9) {
      check(false, "doubly stochastic product closure " + std::to_string(n));
    }
  }
  check(true, "sinkhorn projection, idempotence, product closure up to 16x16");

  bool threw = false;
  try {
    Mat bad(2, 2, 1.0);
    bad.at(0, 1) = 0.0;
    sinkhorn_project(bad);
  } catch (const DomainError&) {
    threw = true;
  }
  check(threw, "non-positive matrix rejected by projection");

  threw = false;
  try {
    Mat features(3, 4, 1.0);
    Mat not_ds(3, 3, 0.9);
    mixed_residual_step(features, not_ds);
  } catch (const ParameterError&) {
    threw = true;
  }
  check(threw, "non-stochastic mix rejected by residual step");
}

void selftest_metrics() {
  // A perfectly separating score must hit AUROC 1, and negation must
  // mirror any AUROC around one half.
  Vec scores = {0.9, 0.8, 0.2, 0.1, 0.85, 0.15};
  std::vector<bool> pos = {true, true, false, false, true, false};
  check(std::abs(auroc(scores, pos) - 1.0) < 1e-15, "separating score gives auroc 1");
  Rng rng(555);
  Vec rs(1000);
  std::vector<bool> rp(1000);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    rs[i] = rng.uniform();
    rp[i] = rng.uniform() < 0.5;
  }
  double a = auroc(rs, rp);
  check(std::abs(a - 0.5) < 0.05, "random scores give auroc near one half");
  Vec neg(rs);
  for (double& v : neg) v = -v;
  check(std::abs(auroc(neg, rp) - (1.0 - a)) < 1e-12, "negated scores mirror auroc");

  bool threw = false;
  try {
    auroc({0.1, 0.2}, {true, true});
  } catch (const MetricError&) {
    threw = true;
  }
  check(threw, "single-class auroc is an error, not 0.5");

  std::vector<RiskCoveragePoint> curve = risk_coverage_curve(rs, rp);
  bool monotone = true;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].coverage < curve[i - 1].coverage) monotone = false;
  }
  check(monotone && std::abs(curve.back().coverage - 1.0) < 1e-15,
        "risk-coverage sweep is monotone and ends at full coverage");

  check(std::abs(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) - 1.0) < 1e-15 &&
            std::abs(spearman({1, 2, 3, 4}, {4, 3, 2, 1}) + 1.0) < 1e-15,
        "spearman rank identity and reversal");
}

void selftest_ab_guard() {
  MetricsReport a, b;
  a.benchmark_hash = "00000000000000aa";
  b.benchmark_hash = "00000000000000bb";
  bool threw = false;
  try {
    ab_compare(a, b);
  } catch (const ComparisonError&) {
    threw = true;
  }
  check(threw, "mismatched benchmark hashes rejected by ab comparison");
}

int cmd_selftest() {
  selftest_simplex_suite();
  selftest_grad_shapes();
  selftest_sinkhorn();
  selftest_metrics();
  selftest_ab_guard();
  std::printf("selftest passed\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixture-of-experts boundary-failure testbed"};
  app.require_subcommand(1);

  std::string config_path, out_dir, run_dir, run_a, run_b;
  std::string format = "json";

  CLI::App* synth = app.add_subcommand("synth", "generate the benchmark for a config");
  synth->add_option("--config", config_path, "experiment config file (defaults when omitted)");
  synth->add_option("--out", out_dir, "output directory")->required();

  CLI::App* run = app.add_subcommand("run", "full pipeline: synth, train, evaluate, report");
  run->add_option("--config", config_path, "experiment config file (defaults when omitted)");
  run->add_option("--out", out_dir, "run directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "replay a finished run and verify its artifacts");
  eval->add_option("--run", run_dir, "run directory")->required();

  CLI::App* report = app.add_subcommand("report", "emit the stored metrics report");
  report->add_option("--run", run_dir, "run directory")->required();
  report->add_option("--format", format, "json or csv")
      ->check(CLI::IsMember({"json", "csv"}));

  CLI::App* ab = app.add_subcommand("ab", "compare two runs on the same benchmark (B minus A)");
  ab->add_option("--run-a", run_a, "baseline run directory")->required();
  ab->add_option("--run-b", run_b, "treatment run directory")->required();

  app.add_subcommand("selftest", "run the numeric and metric invariant suite");

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return cmd_synth(config_path, out_dir);
    if (run->parsed()) return cmd_run(config_path, out_dir);
    if (eval->parsed()) return cmd_eval(run_dir);
    if (report->parsed()) return cmd_report(run_dir, format);
    if (ab->parsed()) return cmd_ab(run_a, run_b);
    return cmd_selftest();
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failure: %s\n", e.what());
    return 2;
  }
}
