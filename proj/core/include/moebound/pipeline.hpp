#pragma once

#include <optional>
#include <string>

#include "moebound/checkpoint.hpp"
#include "moebound/config.hpp"
#include "moebound/report.hpp"

namespace moebound {

// Everything the system knows about one query at inference time, plus the
// oracle outcome for scoring. One row of the decision log.
struct DecisionRecord {
  std::size_t query_id = 0;
  CaseTag case_tag = CaseTag::kInDomain;
  int owner_domain = kGapOwner;
  std::size_t cluster_id = 0;
  std::size_t oracle_label = 0;

  std::size_t predicted_label = 0;
  bool correct = false;
  double confidence = 0.0;    // max of the committee mixture
  double pred_entropy = 0.0;  // entropy of the committee mixture

  double msp_score = 0.0;            // 1 - confidence
  double centroid_distance = 0.0;    // min ood score over all experts
  double routing_entropy = 0.0;
  double coverage_affinity = 0.0;    // 1 - max raw affinity
  double margin = 0.0;
  std::optional<double> vote_disagreement;  // top-2 committee argmax mismatch
  std::optional<double> disagreement_jsd;
  std::optional<double> predictive_variance;
  std::optional<double> meta_reliability;
  bool comparable_confidence = false;
  double min_activated_ood = 0.0;

  std::vector<std::size_t> selected;
  Vec selected_weights;
  VerdictKind verdict = VerdictKind::kInCoverage;
  ResponseAction action = ResponseAction::kAnswer;
};

// Expert class distribution with the bundle's calibration applied.
Vec calibrated_expert_output(const ModelBundle& bundle, std::size_t expert_index,
                             const Vec& features);

DecisionRecord decide_query(const ModelBundle& bundle, const ExperimentConfig& config,
                            const LabeledExample& query, std::size_t query_id);

std::vector<DecisionRecord> evaluate_split(const ModelBundle& bundle,
                                           const ExperimentConfig& config,
                                           const std::vector<LabeledExample>& split);

std::string decision_log_to_csv(const std::vector<DecisionRecord>& records);

MetricsReport build_metrics_report(const ExperimentConfig& config, const Benchmark& bench,
                                   const ModelBundle& bundle,
                                   const std::vector<DecisionRecord>& records,
                                   const std::optional<PreFinetuneSnapshot>& pre_finetune,
                                   const std::vector<std::string>& stages_run);

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunOutcome {
  ExperimentConfig config;
  Benchmark benchmark;
  ModelBundle bundle;
  std::vector<DecisionRecord> decisions;
  MetricsReport report;
  std::vector<StageTiming> timings;

  std::vector<TrainReport> expert_reports;
  std::optional<ContrastiveReport> contrastive_report;
  RouterTrainReport router_report;
  std::vector<FinetuneReport> finetune_reports;
  std::optional<MetaTrainReport> meta_report;
};

// Artifact layout inside a run directory.
struct RunPaths {
  std::string dir;
  std::string config;
  std::string benchmark;
  std::string model;
  std::string decision_log;
  std::string report;
  std::string timings;
  std::string status;
};

RunPaths run_paths(const std::string& dir);

// Full training and evaluation pass. Writes the artifact as it goes;
// status.txt reads "complete" only after every file is in place, otherwise
// it names the stage that was running. Timings are stored separately from
// the metrics report so reruns of the same config stay byte-identical.
RunOutcome run_pipeline(const ExperimentConfig& config, const std::string& out_dir);

// Reloads a finished artifact, replays the whole evaluation from the saved
// models, and verifies the regenerated decision log and metrics report match
// the stored bytes. Returns the replayed report.
MetricsReport replay_run(const std::string& run_dir);

}  // namespace moebound
