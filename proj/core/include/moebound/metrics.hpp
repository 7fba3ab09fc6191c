#pragma once

#include <optional>

#include "moebound/calibration.hpp"
#include "moebound/synth.hpp"

namespace moebound {

// Probability a random positive outscores a random negative (Mann-Whitney
// rank form, average ranks on ties). Throws MetricError when either class is
// absent; never reports a made-up 0.5.
double auroc(const std::vector<double>& scores, const std::vector<bool>& positive);

// Area under the precision-recall curve by step integration over descending
// score groups.
double pr_auc(const std::vector<double>& scores, const std::vector<bool>& positive);

struct RiskCoveragePoint {
  double threshold = 0.0;
  double coverage = 0.0;   // fraction of queries committed (score <= threshold)
  double precision = 0.0;  // accuracy among committed queries

  friend bool operator==(const RiskCoveragePoint&, const RiskCoveragePoint&) = default;
};

// Sweep over every distinct abstention score, committing queries at or below
// it. Coverage rises to exactly 1.0 at the largest threshold.
std::vector<RiskCoveragePoint> risk_coverage_curve(const std::vector<double>& scores,
                                                   const std::vector<bool>& correct);

// Spearman rank correlation with average ranks on ties. Throws MetricError
// for fewer than three points or a constant side.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

struct TagStats {
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
  // mean_confidence - accuracy: positive when the system is sure and wrong.
  double dissociation = 0.0;
};

struct PhenotypeBlock {
  TagStats in_domain;
  TagStats boundary;
  TagStats gap;
  // boundary error rate / in-domain error rate; infinite when the system
  // makes no in-domain errors but does fail on the boundary.
  std::optional<double> boundary_localization_ratio;
  bool localization_infinite = false;
  double ece = 0.0;
};

// Confident-but-wrong profile per case tag. Every tag must be present in the
// evaluated split.
PhenotypeBlock phenotype_metrics(const std::vector<CaseTag>& tags,
                                 const std::vector<double>& confidences,
                                 const std::vector<bool>& correct, std::size_t ece_bins = 15);

}  // namespace moebound
