#include "moebound/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace moebound {

const char* to_string(CalibrationMode mode) {
  switch (mode) {
    case CalibrationMode::kNone: return "none";
    case CalibrationMode::kTemperature: return "temperature";
    case CalibrationMode::kAdaptive: return "adaptive";
  }
  throw LookupError("unknown calibration mode");
}

CalibrationMode calibration_mode_from_string(const std::string& s) {
  if (s == "none") return CalibrationMode::kNone;
  if (s == "temperature") return CalibrationMode::kTemperature;
  if (s == "adaptive") return CalibrationMode::kAdaptive;
  throw ConfigError("unknown calibration mode '" + s + "'");
}

Vec apply_temperature(const Vec& logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ParameterError("apply_temperature: temperature must be positive and finite");
  }
  Vec scaled(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) scaled[i] = logits[i] / temperature;
  return scaled;
}

namespace {

constexpr double kLogTempLo = -2.9957322735539909;  // ln 0.05
constexpr double kLogTempHi = 2.9957322735539909;   // ln 20

void validate_fit_inputs(const std::vector<Vec>& logits, const std::vector<std::size_t>& labels) {
  if (logits.size() != labels.size()) {
    throw DimensionError("calibration fit: logits and labels must align");
  }
  if (logits.size() < 2) throw TrainingError("calibration fit: need at least two samples");
  std::set<std::size_t> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) {
    throw TrainingError("calibration fit: all samples share one label, temperature is unidentified");
  }
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (labels[i] >= logits[i].size()) {
      throw LookupError("calibration fit: label out of range at sample " + std::to_string(i));
    }
  }
}

double mean_nll_at(const std::vector<Vec>& logits, const std::vector<std::size_t>& labels,
                   double temperature) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    Vec p = softmax(apply_temperature(logits[i], temperature));
    total += -std::log(std::max(p[labels[i]], 1e-300));
  }
  return total / static_cast<double>(logits.size());
}

}  // namespace

TemperatureFit fit_temperature(const std::vector<Vec>& logits,
                               const std::vector<std::size_t>& labels) {
  validate_fit_inputs(logits, labels);
  auto objective = [&](double u) { return mean_nll_at(logits, labels, std::exp(u)); };

  // Golden-section search on u = ln T. The NLL is smooth and unimodal in u
  // for fixed logits, so bracketing is safe.
  constexpr double kInvPhi = 0.61803398874989484820;
  double a = kLogTempLo, b = kLogTempHi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = objective(c), fd = objective(d);
  while (b - a > 1e-6) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = objective(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = objective(d);
    }
  }
  TemperatureFit fit;
  fit.temperature = std::exp(0.5 * (a + b));
  fit.nll_before = mean_nll_at(logits, labels, 1.0);
  fit.nll_after = mean_nll_at(logits, labels, fit.temperature);
  return fit;
}

namespace {

double adaptive_nll(const std::vector<Vec>& logits, const std::vector<std::size_t>& labels,
                    const std::vector<double>& norm_entropy, double a, double b) {
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double t = std::exp(a * norm_entropy[i] + b);
    Vec p = softmax(apply_temperature(logits[i], t));
    total += -std::log(std::max(p[labels[i]], 1e-300));
  }
  return total / static_cast<double>(logits.size());
}

}  // namespace

AdaptiveTempParams fit_adaptive_temperature(const std::vector<Vec>& logits,
                                            const std::vector<std::size_t>& labels) {
  validate_fit_inputs(logits, labels);
  std::vector<double> norm_entropy(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double ln_c = std::log(static_cast<double>(logits[i].size()));
    norm_entropy[i] = ln_c > 0.0 ? entropy(softmax(logits[i])) / ln_c : 0.0;
  }

  double best_a = 0.0, best_b = 0.0;
  double best = std::numeric_limits<double>::infinity();
  auto scan = [&](double a_lo, double a_hi, double b_lo, double b_hi, std::size_t steps) {
    for (std::size_t i = 0; i < steps; ++i) {
      double a = a_lo + (a_hi - a_lo) * static_cast<double>(i) / static_cast<double>(steps - 1);
      for (std::size_t j = 0; j < steps; ++j) {
        double b = b_lo + (b_hi - b_lo) * static_cast<double>(j) / static_cast<double>(steps - 1);
        double nll = adaptive_nll(logits, labels, norm_entropy, a, b);
        if (nll < best) {
          best = nll;
          best_a = a;
          best_b = b;
        }
      }
    }
  };

  scan(-3.0, 3.0, kLogTempLo, kLogTempHi, 61);
  double a_step = 0.1, b_step = (kLogTempHi - kLogTempLo) / 60.0;
  for (int round = 0; round < 2; ++round) {
    scan(best_a - a_step, best_a + a_step, best_b - b_step, best_b + b_step, 21);
    a_step /= 10.0;
    b_step /= 10.0;
  }
  return {best_a, best_b};
}

double adaptive_temperature_for(const AdaptiveTempParams& params, const Vec& logits) {
  double ln_c = std::log(static_cast<double>(logits.size()));
  double hn = ln_c > 0.0 ? entropy(softmax(logits)) / ln_c : 0.0;
  return std::exp(params.a * hn + params.b);
}

double confidence_penalty(const Vec& probs, double beta) {
  if (beta < 0.0) throw ParameterError("confidence_penalty: beta must be non-negative");
  double ln_c = std::log(static_cast<double>(probs.size()));
  return beta * (ln_c - entropy(probs));
}

FinetuneReport boundary_aware_finetune(ExpertModel& expert,
                                       const std::vector<LabeledExample>& in_domain,
                                       const std::vector<LabeledExample>& boundary,
                                       const FinetuneHyperparams& hp) {
  if (in_domain.empty()) throw TrainingError("boundary_aware_finetune: no in-domain samples");
  if (hp.batch_size == 0 || hp.epochs == 0) {
    throw ParameterError("boundary_aware_finetune: batch_size and epochs must be positive");
  }
  if (hp.lambda_flat < 0.0) {
    throw ParameterError("boundary_aware_finetune: lambda_flat must be non-negative");
  }

  auto in_domain_accuracy = [&]() {
    std::size_t hits = 0;
    for (const LabeledExample& ex : in_domain) {
      Vec logits = mlp_forward(expert.net, ex.features);
      std::size_t bestc = 0;
      for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[bestc]) bestc = i;
      }
      if (bestc == ex.class_label) hits += 1;
    }
    return static_cast<double>(hits) / static_cast<double>(in_domain.size());
  };
  auto boundary_entropy = [&]() {
    if (boundary.empty()) return 0.0;
    double h = 0.0;
    for (const LabeledExample& ex : boundary) h += entropy(expert_predict(expert, ex.features));
    return h / static_cast<double>(boundary.size());
  };

  FinetuneReport report;
  report.in_domain_accuracy_before = in_domain_accuracy();
  report.boundary_entropy_before = boundary_entropy();

  // One mixed stream: labeled in-domain samples carry cross entropy, boundary
  // samples carry only the flatness term lambda_flat * (ln C - H).
  struct Item {
    const LabeledExample* ex;
    bool is_boundary;
  };
  std::vector<Item> items;
  items.reserve(in_domain.size() + boundary.size());
  for (const LabeledExample& ex : in_domain) items.push_back({&ex, false});
  for (const LabeledExample& ex : boundary) items.push_back({&ex, true});

  Rng shuffle_rng = Rng(hp.seed).split(1);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  OptimizerState opt{hp.learning_rate, 0};
  std::size_t classes = expert.net.output_dim();

  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      std::size_t end = std::min(order.size(), start + hp.batch_size);
      MlpParams grads = zeros_like(expert.net);
      double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const Item& item = items[order[i]];
        ForwardCache cache;
        Vec logits = mlp_forward(expert.net, item.ex->features, &cache);
        Vec dlogits(classes, 0.0);
        if (!item.is_boundary) {
          dlogits = softmax_cross_entropy(logits, item.ex->class_label).dlogits;
        } else if (hp.lambda_flat != 0.0) {
          // d(ln C - H)/dz_j = g_j (ln g_j + H).
          Vec g = softmax(logits);
          double h = entropy(g);
          for (std::size_t j = 0; j < classes; ++j) {
            dlogits[j] = hp.lambda_flat * g[j] * (std::log(std::max(g[j], 1e-300)) + h);
          }
        }
        accumulate(grads, mlp_backward(expert.net, cache, dlogits), inv);
      }
      sgd_step(expert.net, grads, opt);
    }
  }

  report.in_domain_accuracy_after = in_domain_accuracy();
  report.boundary_entropy_after = boundary_entropy();
  return report;
}

CalibrationReport expected_calibration_error(const std::vector<double>& confidences,
                                             const std::vector<bool>& correct,
                                             std::size_t bin_count) {
  if (confidences.size() != correct.size()) {
    throw DimensionError("expected_calibration_error: confidences and outcomes must align");
  }
  if (confidences.empty()) throw MetricError("expected_calibration_error: no samples");
  if (bin_count == 0) throw ParameterError("expected_calibration_error: bin_count must be positive");
  for (double c : confidences) {
    if (!(c >= 0.0 && c <= 1.0)) {
      throw DomainError("expected_calibration_error: confidence outside [0, 1]");
    }
  }
  std::vector<double> conf_sum(bin_count, 0.0);
  std::vector<std::size_t> hits(bin_count, 0), counts(bin_count, 0);
  for (std::size_t i = 0; i < confidences.size(); ++i) {
    std::size_t b = std::min(static_cast<std::size_t>(confidences[i] * static_cast<double>(bin_count)),
                             bin_count - 1);
    conf_sum[b] += confidences[i];
    counts[b] += 1;
    if (correct[i]) hits[b] += 1;
  }
  CalibrationReport report;
  report.bins.resize(bin_count);
  double n = static_cast<double>(confidences.size());
  for (std::size_t b = 0; b < bin_count; ++b) {
    report.bins[b].count = counts[b];
    if (counts[b] == 0) continue;
    report.bins[b].mean_confidence = conf_sum[b] / static_cast<double>(counts[b]);
    report.bins[b].accuracy = static_cast<double>(hits[b]) / static_cast<double>(counts[b]);
    report.ece += (static_cast<double>(counts[b]) / n) *
                  std::abs(report.bins[b].accuracy - report.bins[b].mean_confidence);
  }
  return report;
}

}  // namespace moebound
