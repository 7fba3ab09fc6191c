#include "moebound/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace moebound {

namespace {

// Average ranks (1-based), ties sharing the mean rank of their block.
std::vector<double> average_ranks(const std::vector<double>& values) {
  std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double auroc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw DimensionError("auroc: scores and labels must align");
  if (scores.empty()) throw MetricError("auroc: no samples");
  check_finite(scores, "auroc");
  std::size_t pos = 0;
  for (bool b : positive) pos += b ? 1 : 0;
  std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) {
    throw MetricError("auroc: needs both classes, got " + std::to_string(pos) + " positives and " +
                      std::to_string(neg) + " negatives");
  }
  std::vector<double> ranks = average_ranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (positive[i]) rank_sum += ranks[i];
  }
  double u = rank_sum - 0.5 * static_cast<double>(pos) * static_cast<double>(pos + 1);
  return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

double pr_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw DimensionError("pr_auc: scores and labels must align");
  if (scores.empty()) throw MetricError("pr_auc: no samples");
  check_finite(scores, "pr_auc");
  std::size_t pos = 0;
  for (bool b : positive) pos += b ? 1 : 0;
  if (pos == 0) throw MetricError("pr_auc: no positives");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  // Step integration over tied-score groups: each group contributes its
  // post-group precision times the recall it adds.
  double area = 0.0;
  double prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) {
      seen += 1;
      if (positive[order[k]]) tp += 1;
    }
    double recall = static_cast<double>(tp) / static_cast<double>(pos);
    double precision = static_cast<double>(tp) / static_cast<double>(seen);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return area;
}

std::vector<RiskCoveragePoint> risk_coverage_curve(const std::vector<double>& scores,
                                                   const std::vector<bool>& correct) {
  if (scores.size() != correct.size()) {
    throw DimensionError("risk_coverage_curve: scores and outcomes must align");
  }
  if (scores.empty()) throw MetricError("risk_coverage_curve: no samples");
  check_finite(scores, "risk_coverage_curve");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  std::vector<RiskCoveragePoint> points;
  double n = static_cast<double>(scores.size());
  std::size_t committed = 0, hits = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) {
      committed += 1;
      if (correct[order[k]]) hits += 1;
    }
    RiskCoveragePoint p;
    p.threshold = scores[order[i]];
    p.coverage = static_cast<double>(committed) / n;
    p.precision = static_cast<double>(hits) / static_cast<double>(committed);
    points.push_back(p);
    i = j + 1;
  }
  return points;
}

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw DimensionError("spearman: inputs must align");
  if (xs.size() < 3) throw MetricError("spearman: needs at least three points");
  check_finite(xs, "spearman");
  check_finite(ys, "spearman");
  auto constant = [](const std::vector<double>& v) {
    for (double x : v) {
      if (x != v[0]) return false;
    }
    return true;
  };
  if (constant(xs) || constant(ys)) {
    throw MetricError("spearman: correlation undefined for a constant input");
  }
  std::vector<double> rx = average_ranks(xs);
  std::vector<double> ry = average_ranks(ys);
  double n = static_cast<double>(xs.size());
  double mean = 0.5 * (n + 1.0);
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double a = rx[i] - mean, b = ry[i] - mean;
    num += a * b;
    dx += a * a;
    dy += b * b;
  }
  return num / std::sqrt(dx * dy);
}

PhenotypeBlock phenotype_metrics(const std::vector<CaseTag>& tags,
                                 const std::vector<double>& confidences,
                                 const std::vector<bool>& correct, std::size_t ece_bins) {
  if (tags.size() != confidences.size() || tags.size() != correct.size()) {
    throw DimensionError("phenotype_metrics: inputs must align");
  }
  if (tags.empty()) throw MetricError("phenotype_metrics: no samples");

  auto collect = [&](CaseTag want) {
    TagStats stats;
    double conf = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < tags.size(); ++i) {
      if (tags[i] != want) continue;
      stats.count += 1;
      conf += confidences[i];
      if (correct[i]) hits += 1;
    }
    if (stats.count == 0) {
      throw MetricError(std::string("phenotype_metrics: no samples tagged '") + to_string(want) +
                        "'");
    }
    stats.mean_confidence = conf / static_cast<double>(stats.count);
    stats.accuracy = static_cast<double>(hits) / static_cast<double>(stats.count);
    stats.dissociation = stats.mean_confidence - stats.accuracy;
    return stats;
  };

  PhenotypeBlock block;
  block.in_domain = collect(CaseTag::kInDomain);
  block.boundary = collect(CaseTag::kBoundary);
  block.gap = collect(CaseTag::kGap);

  double in_err = 1.0 - block.in_domain.accuracy;
  double boundary_err = 1.0 - block.boundary.accuracy;
  if (in_err > 0.0) {
    block.boundary_localization_ratio = boundary_err / in_err;
  } else if (boundary_err > 0.0) {
    block.localization_infinite = true;  // errors live only on the boundary
  }
  block.ece = expected_calibration_error(confidences, correct, ece_bins).ece;
  return block;
}

}  // namespace moebound
