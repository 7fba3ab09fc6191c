#pragma once

#include <optional>
#include <string>

#include "moebound/router.hpp"

namespace moebound {

// Jensen-Shannon divergence in nats, symmetric and bounded by ln 2.
double jensen_shannon(const Vec& p, const Vec& q);

// Class distributions of the selected experts, in selection order.
std::vector<Vec> activate_experts(const RoutingDecision& decision,
                                  const std::vector<ExpertModel>& experts, const Vec& features);

// Cross-expert disagreement over one query. With fewer than two activated
// experts the divergence fields stay empty rather than pretending agreement.
struct DisagreementReport {
  std::vector<std::size_t> activated;
  std::optional<double> mean_pairwise_jsd;
  std::optional<double> predictive_variance;  // per-class variance across experts, summed
  bool comparable_confidence = false;  // second selected weight within gamma of the first
};

DisagreementReport disagreement_report(const RoutingDecision& decision,
                                       const std::vector<Vec>& outputs, double gamma);

enum class VerdictKind { kInCoverage, kBoundaryViolation, kCoverageGap };
enum class ResponseAction { kAnswer, kCaveat, kAbstain, kFallback };

const char* to_string(VerdictKind kind);
const char* to_string(ResponseAction action);
ResponseAction response_action_from_string(const std::string& s);

struct VerdictThresholds {
  double theta_ood = 4.0;   // min activated ood above this -> coverage gap
  double theta_jsd = 0.35;  // mean pairwise jsd above this -> boundary violation
};

struct VerdictEvidence {
  double min_activated_ood = 0.0;
  std::optional<double> mean_pairwise_jsd;
  bool comparable_confidence = false;

  friend bool operator==(const VerdictEvidence&, const VerdictEvidence&) = default;
};

struct CoverageVerdict {
  VerdictKind kind = VerdictKind::kInCoverage;
  VerdictEvidence evidence;
};

// Verdict table, checked in order:
//   (a) every activated expert far from its data -> coverage gap,
//   (b) activated experts disagree while comparably confident -> boundary
//       violation,
//   (c) otherwise in coverage.
// Coverage gap deliberately outranks boundary violation.
CoverageVerdict coverage_verdict(const RoutingDecision& decision,
                                 const DisagreementReport& report,
                                 const VerdictThresholds& thresholds);

// Action per verdict kind. Fields are optional so that an incomplete policy
// is detectable instead of silently defaulting.
struct ResponsePolicy {
  std::optional<ResponseAction> in_coverage = ResponseAction::kAnswer;
  std::optional<ResponseAction> boundary_violation = ResponseAction::kCaveat;
  std::optional<ResponseAction> coverage_gap = ResponseAction::kAbstain;
};

struct SystemResponse {
  ResponseAction action = ResponseAction::kAnswer;
  std::string note_template;  // stable id of the user-facing framing
};

SystemResponse system_response(VerdictKind kind, const ResponsePolicy& policy);

// Three-way case classifier sitting above the experts. Input is assembled
// from inference-time evidence only.
enum class MetaInputMode { kEmbedding, kConcatOutputs, kEmbeddingPlusSignals };

const char* to_string(MetaInputMode mode);
MetaInputMode meta_input_mode_from_string(const std::string& s);

std::size_t meta_input_dim(MetaInputMode mode, std::size_t embed_dim, std::size_t num_experts,
                           std::size_t classes);

// `all_outputs` holds every expert's distribution for this query (needed by
// kConcatOutputs); the other modes read the embedding and routing evidence.
Vec assemble_meta_input(MetaInputMode mode, const Vec& embedding,
                        const std::vector<Vec>& all_outputs, const RoutingDecision& decision,
                        const DisagreementReport& report);

struct MetaExpertModel {
  MetaInputMode input_mode = MetaInputMode::kEmbeddingPlusSignals;
  MlpParams net;  // meta input -> hidden -> 3 case classes

  friend bool operator==(const MetaExpertModel&, const MetaExpertModel&) = default;
};

struct MetaTrainHyperparams {
  std::size_t hidden_dim = 16;
  std::size_t epochs = 60;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 4;
};

struct MetaTrainReport {
  std::size_t per_class_count = 0;  // after balancing
  double final_loss = 0.0;
  double train_accuracy = 0.0;
};

// Trains on (meta input, case tag) pairs, downsampling to the smallest class
// so no case dominates. A missing class is an error naming it.
std::pair<MetaExpertModel, MetaTrainReport> train_meta_expert(
    const std::vector<Vec>& inputs, const std::vector<CaseTag>& tags, MetaInputMode mode,
    const MetaTrainHyperparams& hp);

struct MetaPrediction {
  Vec case_probs;           // over {in_domain, boundary, gap}
  double reliability = 0.0;  // probability the query is safely in coverage
};

MetaPrediction meta_predict(const MetaExpertModel& meta, const Vec& input);

}  // namespace moebound
