#include "moebound/detection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace moebound {

double jensen_shannon(const Vec& p, const Vec& q) {
  if (p.size() != q.size()) {
    throw DimensionError("jensen_shannon: length mismatch " + std::to_string(p.size()) + " vs " +
                         std::to_string(q.size()));
  }
  Vec m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  return 0.5 * kl_divergence(p, m) + 0.5 * kl_divergence(q, m);
}

std::vector<Vec> activate_experts(const RoutingDecision& decision,
                                  const std::vector<ExpertModel>& experts, const Vec& features) {
  std::vector<Vec> outputs;
  outputs.reserve(decision.selected.size());
  for (std::size_t idx : decision.selected) {
    if (idx >= experts.size()) {
      throw LookupError("activate_experts: selected expert " + std::to_string(idx) +
                        " out of range");
    }
    outputs.push_back(expert_predict(experts[idx], features));
  }
  return outputs;
}

DisagreementReport disagreement_report(const RoutingDecision& decision,
                                       const std::vector<Vec>& outputs, double gamma) {
  if (outputs.size() != decision.selected.size()) {
    throw DimensionError("disagreement_report: " + std::to_string(outputs.size()) +
                         " outputs for " + std::to_string(decision.selected.size()) +
                         " activated experts");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw ParameterError("disagreement_report: gamma must lie in [0, 1]");
  }
  DisagreementReport report;
  report.activated = decision.selected;
  std::size_t n = outputs.size();
  if (n >= 2) {
    double jsd_sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        jsd_sum += jensen_shannon(outputs[i], outputs[j]);
        pairs += 1;
      }
    }
    report.mean_pairwise_jsd = jsd_sum / static_cast<double>(pairs);

    std::size_t classes = outputs[0].size();
    double var_sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      double mean = 0.0;
      for (const Vec& o : outputs) mean += o[c];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (const Vec& o : outputs) var += (o[c] - mean) * (o[c] - mean);
      var_sum += var / static_cast<double>(n);
    }
    report.predictive_variance = var_sum;

    // Selected weights arrive sorted descending; the routing is ambivalent
    // when the runner-up carries at least gamma of the winner's weight.
    report.comparable_confidence =
        decision.selected_weights[1] >= gamma * decision.selected_weights[0];
  }
  return report;
}

const char* to_string(VerdictKind kind) {
  switch (kind) {
    case VerdictKind::kInCoverage: return "in_coverage";
    case VerdictKind::kBoundaryViolation: return "boundary_violation";
    case VerdictKind::kCoverageGap: return "coverage_gap";
  }
  throw LookupError("unknown verdict kind");
}

const char* to_string(ResponseAction action) {
  switch (action) {
    case ResponseAction::kAnswer: return "answer";
    case ResponseAction::kCaveat: return "caveat";
    case ResponseAction::kAbstain: return "abstain";
    case ResponseAction::kFallback: return "fallback";
  }
  throw LookupError("unknown response action");
}

ResponseAction response_action_from_string(const std::string& s) {
  if (s == "answer") return ResponseAction::kAnswer;
  if (s == "caveat") return ResponseAction::kCaveat;
  if (s == "abstain") return ResponseAction::kAbstain;
  if (s == "fallback") return ResponseAction::kFallback;
  throw ConfigError("unknown response action '" + s + "'");
}

CoverageVerdict coverage_verdict(const RoutingDecision& decision,
                                 const DisagreementReport& report,
                                 const VerdictThresholds& thresholds) {
  if (report.activated.empty()) throw DimensionError("coverage_verdict: no activated experts");
  CoverageVerdict v;
  double min_ood = std::numeric_limits<double>::infinity();
  for (std::size_t idx : report.activated) {
    if (idx >= decision.centroid_distances.size()) {
      throw LookupError("coverage_verdict: activated expert " + std::to_string(idx) +
                        " out of range");
    }
    min_ood = std::min(min_ood, decision.centroid_distances[idx]);
  }
  v.evidence.min_activated_ood = min_ood;
  v.evidence.mean_pairwise_jsd = report.mean_pairwise_jsd;
  v.evidence.comparable_confidence = report.comparable_confidence;

  // Gap first: when nobody is anywhere near the query, the experts'
  // agreement or disagreement carries no information.
  if (min_ood > thresholds.theta_ood) {
    v.kind = VerdictKind::kCoverageGap;
  } else if (report.mean_pairwise_jsd.has_value() &&
             *report.mean_pairwise_jsd > thresholds.theta_jsd && report.comparable_confidence) {
    v.kind = VerdictKind::kBoundaryViolation;
  } else {
    v.kind = VerdictKind::kInCoverage;
  }
  return v;
}

SystemResponse system_response(VerdictKind kind, const ResponsePolicy& policy) {
  std::optional<ResponseAction> action;
  switch (kind) {
    case VerdictKind::kInCoverage: action = policy.in_coverage; break;
    case VerdictKind::kBoundaryViolation: action = policy.boundary_violation; break;
    case VerdictKind::kCoverageGap: action = policy.coverage_gap; break;
  }
  if (!action.has_value()) {
    throw ConfigError(std::string("response policy has no action for verdict '") +
                      to_string(kind) + "'");
  }
  SystemResponse resp;
  resp.action = *action;
  switch (resp.action) {
    case ResponseAction::kAnswer: resp.note_template = "answer_plain"; break;
    case ResponseAction::kCaveat: resp.note_template = "answer_with_uncertainty_caveat"; break;
    case ResponseAction::kAbstain: resp.note_template = "abstain_out_of_coverage"; break;
    case ResponseAction::kFallback: resp.note_template = "fallback_generalist"; break;
  }
  return resp;
}

const char* to_string(MetaInputMode mode) {
  switch (mode) {
    case MetaInputMode::kEmbedding: return "embedding";
    case MetaInputMode::kConcatOutputs: return "concat_outputs";
    case MetaInputMode::kEmbeddingPlusSignals: return "embedding_plus_signals";
  }
  throw LookupError("unknown meta input mode");
}

MetaInputMode meta_input_mode_from_string(const std::string& s) {
  if (s == "embedding") return MetaInputMode::kEmbedding;
  if (s == "concat_outputs") return MetaInputMode::kConcatOutputs;
  if (s == "embedding_plus_signals") return MetaInputMode::kEmbeddingPlusSignals;
  throw ConfigError("unknown meta input mode '" + s + "'");
}

std::size_t meta_input_dim(MetaInputMode mode, std::size_t embed_dim, std::size_t num_experts,
                           std::size_t classes) {
  switch (mode) {
    case MetaInputMode::kEmbedding: return embed_dim;
    case MetaInputMode::kConcatOutputs: return num_experts * classes;
    case MetaInputMode::kEmbeddingPlusSignals: return embed_dim + num_experts + 2;
  }
  throw LookupError("unknown meta input mode");
}

Vec assemble_meta_input(MetaInputMode mode, const Vec& embedding,
                        const std::vector<Vec>& all_outputs, const RoutingDecision& decision,
                        const DisagreementReport& report) {
  switch (mode) {
    case MetaInputMode::kEmbedding:
      return embedding;
    case MetaInputMode::kConcatOutputs: {
      if (all_outputs.empty()) {
        throw DimensionError("assemble_meta_input: concat_outputs needs every expert's output");
      }
      Vec input;
      for (const Vec& o : all_outputs) input.insert(input.end(), o.begin(), o.end());
      return input;
    }
    case MetaInputMode::kEmbeddingPlusSignals: {
      Vec input = embedding;
      Vec aff = decision.raw_affinities;
      std::sort(aff.begin(), aff.end(), std::greater<>());
      input.insert(input.end(), aff.begin(), aff.end());
      // JSD lives in [0, ln 2]; -1 marks "undefined" (single activated
      // expert) without colliding with a real value.
      input.push_back(report.mean_pairwise_jsd.value_or(-1.0));
      input.push_back(decision.margin);
      return input;
    }
  }
  throw LookupError("unknown meta input mode");
}

namespace {

std::size_t tag_class(CaseTag tag) {
  switch (tag) {
    case CaseTag::kInDomain: return 0;
    case CaseTag::kBoundary: return 1;
    case CaseTag::kGap: return 2;
  }
  throw LookupError("unknown case tag");
}

}  // namespace

std::pair<MetaExpertModel, MetaTrainReport> train_meta_expert(
    const std::vector<Vec>& inputs, const std::vector<CaseTag>& tags, MetaInputMode mode,
    const MetaTrainHyperparams& hp) {
  if (inputs.empty() || inputs.size() != tags.size()) {
    throw TrainingError("train_meta_expert: inputs and tags must be non-empty and aligned");
  }
  if (hp.batch_size == 0 || hp.epochs == 0) {
    throw ParameterError("train_meta_expert: batch_size and epochs must be positive");
  }
  std::vector<std::vector<std::size_t>> by_class(3);
  for (std::size_t i = 0; i < tags.size(); ++i) by_class[tag_class(tags[i])].push_back(i);
  static const char* kClassNames[3] = {"in_domain", "boundary", "gap"};
  std::size_t min_count = inputs.size();
  for (std::size_t c = 0; c < 3; ++c) {
    if (by_class[c].empty()) {
      throw TrainingError(std::string("train_meta_expert: no training cases tagged '") +
                          kClassNames[c] + "'");
    }
    min_count = std::min(min_count, by_class[c].size());
  }

  Rng rng(hp.seed);
  Rng balance_rng = rng.split(1);
  Rng init_rng = rng.split(2);
  Rng shuffle_rng = rng.split(3);

  // Balanced training set: equal draw from every case class.
  std::vector<std::pair<std::size_t, std::size_t>> data;  // (input index, class)
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<std::size_t> pool = by_class[c];
    balance_rng.shuffle(pool);
    for (std::size_t i = 0; i < min_count; ++i) data.push_back({pool[i], c});
  }

  MetaExpertModel meta;
  meta.input_mode = mode;
  meta.net = make_mlp({inputs[0].size(), hp.hidden_dim, 3}, init_rng);

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  OptimizerState opt{hp.learning_rate, 0};
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      std::size_t end = std::min(order.size(), start + hp.batch_size);
      MlpParams grads = zeros_like(meta.net);
      double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        auto [idx, cls] = data[order[i]];
        ForwardCache cache;
        Vec logits = mlp_forward(meta.net, inputs[idx], &cache);
        SoftmaxXent xent = softmax_cross_entropy(logits, cls);
        accumulate(grads, mlp_backward(meta.net, cache, xent.dlogits), inv);
      }
      sgd_step(meta.net, grads, opt);
    }
  }

  MetaTrainReport report;
  report.per_class_count = min_count;
  double loss = 0.0;
  std::size_t hits = 0;
  for (const auto& [idx, cls] : data) {
    Vec logits = mlp_forward(meta.net, inputs[idx]);
    loss += softmax_cross_entropy(logits, cls).loss;
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.size(); ++j) {
      if (logits[j] > logits[best]) best = j;
    }
    if (best == cls) hits += 1;
  }
  report.final_loss = loss / static_cast<double>(data.size());
  report.train_accuracy = static_cast<double>(hits) / static_cast<double>(data.size());
  if (!std::isfinite(report.final_loss)) {
    throw TrainingError("train_meta_expert: loss diverged");
  }
  return {std::move(meta), report};
}

MetaPrediction meta_predict(const MetaExpertModel& meta, const Vec& input) {
  MetaPrediction pred;
  pred.case_probs = softmax(mlp_forward(meta.net, input));
  pred.reliability = pred.case_probs[0];
  return pred;
}

}  // namespace moebound
