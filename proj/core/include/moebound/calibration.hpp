#pragma once

#include <optional>
#include <string>

#include "moebound/experts.hpp"
#include "moebound/numerics.hpp"

namespace moebound {

enum class CalibrationMode { kNone, kTemperature, kAdaptive };

const char* to_string(CalibrationMode mode);
CalibrationMode calibration_mode_from_string(const std::string& s);

Vec apply_temperature(const Vec& logits, double temperature);

// Scalar temperature minimizing mean NLL, found by golden-section search on
// log T over [ln 0.05, ln 20] to 1e-6. Deterministic; needs at least two
// samples and at least two distinct labels.
struct TemperatureFit {
  double temperature = 1.0;
  double nll_before = 0.0;
  double nll_after = 0.0;
};

TemperatureFit fit_temperature(const std::vector<Vec>& logits,
                               const std::vector<std::size_t>& labels);

// Entropy-conditioned temperature T(x) = exp(a * Hn(x) + b), Hn being the
// uncalibrated predictive entropy normalized by ln C. Fitted on a coarse
// (a, b) grid followed by two local refinement passes; ties break toward the
// first grid point scanned, so the fit is deterministic.
struct AdaptiveTempParams {
  double a = 0.0;
  double b = 0.0;

  friend bool operator==(const AdaptiveTempParams&, const AdaptiveTempParams&) = default;
};

AdaptiveTempParams fit_adaptive_temperature(const std::vector<Vec>& logits,
                                            const std::vector<std::size_t>& labels);

double adaptive_temperature_for(const AdaptiveTempParams& params, const Vec& logits);

// beta * (ln C - H(p)): the confidence penalty added to a training loss to
// discourage saturated predictions.
double confidence_penalty(const Vec& probs, double beta);

struct FinetuneHyperparams {
  double lambda_flat = 0.5;
  std::size_t epochs = 15;
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::uint64_t seed = 5;
};

struct FinetuneReport {
  double in_domain_accuracy_before = 0.0;
  double in_domain_accuracy_after = 0.0;
  double boundary_entropy_before = 0.0;
  double boundary_entropy_after = 0.0;
};

// Boundary-aware finetune of one expert: cross entropy on its own samples
// plus lambda_flat * (ln C - H) on boundary samples, pushing the expert
// toward flat outputs exactly where its labels stop being trustworthy.
FinetuneReport boundary_aware_finetune(ExpertModel& expert,
                                       const std::vector<LabeledExample>& in_domain,
                                       const std::vector<LabeledExample>& boundary,
                                       const FinetuneHyperparams& hp);

struct CalibrationBin {
  double mean_confidence = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

struct CalibrationReport {
  double ece = 0.0;
  std::vector<CalibrationBin> bins;  // equal-width over [0, 1]
};

// Expected calibration error with equal-width confidence bins. Bin counts
// always sum to the number of samples; confidence 1.0 lands in the top bin.
CalibrationReport expected_calibration_error(const std::vector<double>& confidences,
                                             const std::vector<bool>& correct,
                                             std::size_t bin_count = 15);

}  // namespace moebound
