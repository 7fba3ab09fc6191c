#pragma once

#include <map>
#include <optional>
#include <string>

#include "moebound/metrics.hpp"

namespace moebound {

// One abstention signal scored as a detector of problem cases (boundary and
// gap queries). A signal that is structurally absent from a run (for
// example, cross-expert divergence under top-1 routing) stays unavailable
// instead of carrying fabricated numbers.
struct DetectorRow {
  std::string name;
  bool available = false;
  double auroc_all = 0.0;
  double pr_auc_all = 0.0;
  double auroc_boundary = 0.0;  // boundary positives vs in-domain negatives
  double auroc_gap = 0.0;       // gap positives vs in-domain negatives
};

// Directional view of one false-friend pair: how a single expert behaves on
// shared-cluster test queries owned by its counterpart.
struct PairPhenotypeRow {
  int expert_domain = 0;
  int owner_domain = 0;
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
};

struct SignalSummary {
  std::string name;
  std::size_t count = 0;  // defined entries
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

struct MonitoringBlock {
  std::vector<SignalSummary> signals;
  std::map<std::string, std::size_t> verdict_counts;
  std::map<std::string, std::size_t> action_counts;
};

struct CalibrationSummary {
  std::string mode = "none";
  double temperature = 1.0;
  double adaptive_a = 0.0;
  double adaptive_b = 0.0;
  double test_ece = 0.0;
};

struct PreFinetuneSnapshot {
  double entropy_distance_spearman = 0.0;
  double in_domain_test_accuracy = 0.0;
};

struct MetricsReport {
  std::string config_hash;
  std::string benchmark_hash;
  std::uint64_t seed = 0;
  std::size_t test_count = 0;
  std::vector<std::string> stages_run;

  std::vector<DetectorRow> detectors;
  std::string risk_coverage_signal;
  std::vector<RiskCoveragePoint> risk_coverage;
  PhenotypeBlock phenotype;
  std::vector<PairPhenotypeRow> pair_phenotype;
  double entropy_distance_spearman = 0.0;
  double in_domain_test_accuracy = 0.0;
  std::optional<PreFinetuneSnapshot> pre_finetune;
  CalibrationSummary calibration;
  MonitoringBlock monitoring;
};

// Canonical JSON: frozen key order, shortest-round-trip floats, no locale
// dependence. Two equal reports serialize to identical bytes.
std::string metrics_report_to_json(const MetricsReport& report);
MetricsReport metrics_report_from_json(const std::string& text, const std::string& name);

void save_metrics_report(const MetricsReport& report, const std::string& path);
MetricsReport load_metrics_report(const std::string& path);

// CSV projection: one file per table, keyed by file name.
std::map<std::string, std::string> metrics_report_to_csv(const MetricsReport& report);

struct DetectorDelta {
  std::string name;
  // Present only when the detector is available on both sides.
  std::optional<double> auroc_delta;
  std::optional<double> pr_auc_delta;
  bool available_a = false;
  bool available_b = false;
};

// B minus A over runs that share a benchmark. Refuses to compare runs built
// on different data.
struct AbComparison {
  std::string benchmark_hash;
  std::string config_hash_a, config_hash_b;
  std::vector<DetectorDelta> detectors;
  double boundary_dissociation_delta = 0.0;
  double gap_dissociation_delta = 0.0;
  double in_domain_accuracy_delta = 0.0;
  double ece_delta = 0.0;
  double entropy_distance_spearman_delta = 0.0;
};

AbComparison ab_compare(const MetricsReport& a, const MetricsReport& b);
std::string ab_comparison_to_json(const AbComparison& cmp);

}  // namespace moebound
