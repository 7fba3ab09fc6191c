#include "moebound/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>

#include "moebound/textio.hpp"

namespace moebound {

namespace {

std::size_t argmax(const Vec& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

std::size_t expert_index_for_domain(const ModelBundle& bundle, int domain) {
  for (std::size_t i = 0; i < bundle.experts.size(); ++i) {
    if (bundle.experts[i].domain_id == domain) return i;
  }
  throw LookupError("no expert for domain " + std::to_string(domain));
}

struct QueryContext {
  Vec embedding;
  RoutingDecision decision;
  std::vector<Vec> all_outputs;       // every expert, calibrated
  std::vector<Vec> selected_outputs;  // in selection order
  DisagreementReport report;
};

QueryContext compute_query_context(const ModelBundle& bundle, const ExperimentConfig& config,
                                   const Vec& features) {
  QueryContext ctx;
  ctx.embedding = embed(bundle.embed_net, features);
  ctx.decision = route(bundle.router, bundle.stats, ctx.embedding);
  ctx.all_outputs.reserve(bundle.experts.size());
  for (std::size_t i = 0; i < bundle.experts.size(); ++i) {
    ctx.all_outputs.push_back(calibrated_expert_output(bundle, i, features));
  }
  ctx.selected_outputs.reserve(ctx.decision.selected.size());
  for (std::size_t idx : ctx.decision.selected) {
    ctx.selected_outputs.push_back(ctx.all_outputs[idx]);
  }
  ctx.report = disagreement_report(ctx.decision, ctx.selected_outputs, config.gamma);
  return ctx;
}

}  // namespace

Vec calibrated_expert_output(const ModelBundle& bundle, std::size_t expert_index,
                             const Vec& features) {
  if (expert_index >= bundle.experts.size()) {
    throw LookupError("calibrated_expert_output: expert index out of range");
  }
  Vec logits = mlp_forward(bundle.experts[expert_index].net, features);
  switch (bundle.calibration_mode) {
    case CalibrationMode::kNone:
      return softmax(logits);
    case CalibrationMode::kTemperature:
      return softmax(apply_temperature(logits, bundle.temperature));
    case CalibrationMode::kAdaptive:
      return softmax(apply_temperature(logits, adaptive_temperature_for(bundle.adaptive, logits)));
  }
  throw LookupError("unknown calibration mode");
}

DecisionRecord decide_query(const ModelBundle& bundle, const ExperimentConfig& config,
                            const LabeledExample& query, std::size_t query_id) {
  QueryContext ctx = compute_query_context(bundle, config, query.features);

  DecisionRecord rec;
  rec.query_id = query_id;
  rec.case_tag = query.case_tag;
  rec.owner_domain = query.owner_domain;
  rec.cluster_id = query.cluster_id;
  rec.oracle_label = query.class_label;

  Vec mixture(ctx.selected_outputs[0].size(), 0.0);
  for (std::size_t i = 0; i < ctx.selected_outputs.size(); ++i) {
    double w = ctx.decision.selected_weights[i];
    for (std::size_t c = 0; c < mixture.size(); ++c) mixture[c] += w * ctx.selected_outputs[i][c];
  }
  rec.predicted_label = argmax(mixture);
  rec.correct = rec.predicted_label == rec.oracle_label;
  rec.confidence = mixture[rec.predicted_label];
  rec.pred_entropy = entropy(mixture);

  rec.msp_score = 1.0 - rec.confidence;
  rec.centroid_distance =
      *std::min_element(ctx.decision.centroid_distances.begin(), ctx.decision.centroid_distances.end());
  rec.routing_entropy = ctx.decision.routing_entropy;
  rec.coverage_affinity =
      1.0 - *std::max_element(ctx.decision.raw_affinities.begin(), ctx.decision.raw_affinities.end());
  rec.margin = ctx.decision.margin;
  if (ctx.decision.selected.size() >= 2) {
    rec.vote_disagreement =
        argmax(ctx.selected_outputs[0]) != argmax(ctx.selected_outputs[1]) ? 1.0 : 0.0;
  }
  rec.disagreement_jsd = ctx.report.mean_pairwise_jsd;
  rec.predictive_variance = ctx.report.predictive_variance;
  rec.comparable_confidence = ctx.report.comparable_confidence;

  CoverageVerdict verdict = coverage_verdict(ctx.decision, ctx.report, config.thresholds);
  rec.verdict = verdict.kind;
  rec.min_activated_ood = verdict.evidence.min_activated_ood;
  rec.action = system_response(verdict.kind, config.policy).action;

  if (bundle.meta.has_value()) {
    Vec input = assemble_meta_input(bundle.meta->input_mode, ctx.embedding, ctx.all_outputs,
                                    ctx.decision, ctx.report);
    rec.meta_reliability = meta_predict(*bundle.meta, input).reliability;
  }

  rec.selected = ctx.decision.selected;
  rec.selected_weights = ctx.decision.selected_weights;
  return rec;
}

std::vector<DecisionRecord> evaluate_split(const ModelBundle& bundle,
                                           const ExperimentConfig& config,
                                           const std::vector<LabeledExample>& split) {
  if (split.empty()) throw PipelineError("evaluate_split: empty split");
  std::vector<DecisionRecord> records;
  records.reserve(split.size());
  for (std::size_t i = 0; i < split.size(); ++i) {
    records.push_back(decide_query(bundle, config, split[i], i));
  }
  return records;
}

std::string decision_log_to_csv(const std::vector<DecisionRecord>& records) {
  std::string out =
      "query_id,case_tag,owner_domain,cluster_id,oracle_label,predicted_label,correct,"
      "confidence,pred_entropy,msp_score,centroid_distance,routing_entropy,coverage_affinity,"
      "margin,vote_disagreement,disagreement_jsd,predictive_variance,meta_reliability,"
      "comparable_confidence,min_activated_ood,selected,selected_weights,verdict,action\n";
  auto opt = [](const std::optional<double>& v) { return v.has_value() ? fmt_double(*v) : ""; };
  for (const DecisionRecord& r : records) {
    out += std::to_string(r.query_id);
    out += ',';
    out += to_string(r.case_tag);
    out += ',';
    out += std::to_string(r.owner_domain);
    out += ',';
    out += std::to_string(r.cluster_id);
    out += ',';
    out += std::to_string(r.oracle_label);
    out += ',';
    out += std::to_string(r.predicted_label);
    out += ',';
    out += r.correct ? "1" : "0";
    out += ',';
    out += fmt_double(r.confidence);
    out += ',';
    out += fmt_double(r.pred_entropy);
    out += ',';
    out += fmt_double(r.msp_score);
    out += ',';
    out += fmt_double(r.centroid_distance);
    out += ',';
    out += fmt_double(r.routing_entropy);
    out += ',';
    out += fmt_double(r.coverage_affinity);
    out += ',';
    out += fmt_double(r.margin);
    out += ',';
    out += opt(r.vote_disagreement);
    out += ',';
    out += opt(r.disagreement_jsd);
    out += ',';
    out += opt(r.predictive_variance);
    out += ',';
    out += opt(r.meta_reliability);
    out += ',';
    out += r.comparable_confidence ? "1" : "0";
    out += ',';
    out += fmt_double(r.min_activated_ood);
    out += ',';
    for (std::size_t i = 0; i < r.selected.size(); ++i) {
      if (i) out += '|';
      out += std::to_string(r.selected[i]);
    }
    out += ',';
    for (std::size_t i = 0; i < r.selected_weights.size(); ++i) {
      if (i) out += '|';
      out += fmt_double(r.selected_weights[i]);
    }
    out += ',';
    out += to_string(r.verdict);
    out += ',';
    out += to_string(r.action);
    out += '\n';
  }
  return out;
}

namespace {

struct Extractor {
  const char* name;
  std::function<std::optional<double>(const DecisionRecord&)> get;
};

std::vector<Extractor> detector_extractors() {
  return {
      {"msp", [](const DecisionRecord& r) { return std::optional<double>(r.msp_score); }},
      {"centroid_distance",
       [](const DecisionRecord& r) { return std::optional<double>(r.centroid_distance); }},
      {"vote_disagreement", [](const DecisionRecord& r) { return r.vote_disagreement; }},
      {"routing_entropy",
       [](const DecisionRecord& r) { return std::optional<double>(r.routing_entropy); }},
      {"disagreement_jsd", [](const DecisionRecord& r) { return r.disagreement_jsd; }},
      {"coverage_affinity",
       [](const DecisionRecord& r) { return std::optional<double>(r.coverage_affinity); }},
      {"meta_reliability",
       [](const DecisionRecord& r) -> std::optional<double> {
         if (!r.meta_reliability.has_value()) return std::nullopt;
         return 1.0 - *r.meta_reliability;
       }},
  };
}

double records_spearman(const std::vector<DecisionRecord>& records) {
  std::vector<double> h, d;
  h.reserve(records.size());
  d.reserve(records.size());
  for (const DecisionRecord& r : records) {
    h.push_back(r.pred_entropy);
    d.push_back(r.centroid_distance);
  }
  return spearman(h, d);
}

double records_in_domain_accuracy(const std::vector<DecisionRecord>& records) {
  std::size_t n = 0, hits = 0;
  for (const DecisionRecord& r : records) {
    if (r.case_tag != CaseTag::kInDomain) continue;
    n += 1;
    if (r.correct) hits += 1;
  }
  if (n == 0) throw MetricError("no in-domain records");
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace

MetricsReport build_metrics_report(const ExperimentConfig& config, const Benchmark& bench,
                                   const ModelBundle& bundle,
                                   const std::vector<DecisionRecord>& records,
                                   const std::optional<PreFinetuneSnapshot>& pre_finetune,
                                   const std::vector<std::string>& stages_run) {
  if (records.empty()) throw MetricError("build_metrics_report: no records");
  MetricsReport report;
  report.config_hash = experiment_config_hash(config);
  report.benchmark_hash = hash_hex(bench.content_hash());
  report.seed = config.seed;
  report.test_count = records.size();
  report.stages_run = stages_run;

  std::vector<bool> positive, correct;
  std::vector<CaseTag> tags;
  std::vector<double> confidences;
  for (const DecisionRecord& r : records) {
    positive.push_back(r.case_tag != CaseTag::kInDomain);
    correct.push_back(r.correct);
    tags.push_back(r.case_tag);
    confidences.push_back(r.confidence);
  }

  // Every detector is scored on the identical query set; a signal undefined
  // for any query in this run configuration is reported unavailable.
  for (const Extractor& ex : detector_extractors()) {
    DetectorRow row;
    row.name = ex.name;
    std::vector<double> scores;
    scores.reserve(records.size());
    bool defined = true;
    for (const DecisionRecord& r : records) {
      std::optional<double> v = ex.get(r);
      if (!v.has_value()) {
        defined = false;
        break;
      }
      scores.push_back(*v);
    }
    row.available = defined;
    if (defined) {
      row.auroc_all = auroc(scores, positive);
      row.pr_auc_all = pr_auc(scores, positive);
      std::vector<double> sb, sg;
      std::vector<bool> pb, pg;
      for (std::size_t i = 0; i < records.size(); ++i) {
        if (tags[i] != CaseTag::kGap) {
          sb.push_back(scores[i]);
          pb.push_back(tags[i] == CaseTag::kBoundary);
        }
        if (tags[i] != CaseTag::kBoundary) {
          sg.push_back(scores[i]);
          pg.push_back(tags[i] == CaseTag::kGap);
        }
      }
      row.auroc_boundary = auroc(sb, pb);
      row.auroc_gap = auroc(sg, pg);
    }
    report.detectors.push_back(std::move(row));
  }

  bool jsd_available = false;
  for (const DetectorRow& d : report.detectors) {
    if (d.name == "disagreement_jsd") jsd_available = d.available;
  }
  bool ratio_available = jsd_available;
  for (const DecisionRecord& r : records) {
    if (r.selected_weights.size() < 2 || r.selected_weights[0] <= 0.0) {
      ratio_available = false;
      break;
    }
  }
  // Raw JSD is noisy when the runner-up expert holds negligible gate weight:
  // a confident in-domain route still disagrees with some arbitrary foreign
  // expert. Scaling by the top-2 weight ratio keeps the signal continuous
  // (good for coverage sweeps) while discounting one-sided routes.
  report.risk_coverage_signal = ratio_available ? "weighted_disagreement" : "msp";
  {
    std::vector<double> scores;
    scores.reserve(records.size());
    for (const DecisionRecord& r : records) {
      scores.push_back(ratio_available
                           ? *r.disagreement_jsd * (r.selected_weights[1] / r.selected_weights[0])
                           : r.msp_score);
    }
    report.risk_coverage = risk_coverage_curve(scores, correct);
  }

  report.phenotype = phenotype_metrics(tags, confidences, correct, config.ece_bins);

  for (const FalseFriendPair& pair : bench.config.false_friend_pairs) {
    std::vector<std::size_t> shared_ids;
    for (const ClusterSpec& c : bench.clusters) {
      if (c.kind == ClusterKind::kShared &&
          ((c.owner_a == pair.domain_a && c.owner_b == pair.domain_b) ||
           (c.owner_a == pair.domain_b && c.owner_b == pair.domain_a))) {
        shared_ids.push_back(c.id);
      }
    }
    auto directional = [&](int expert_domain, int owner_domain) {
      PairPhenotypeRow row;
      row.expert_domain = expert_domain;
      row.owner_domain = owner_domain;
      std::size_t expert_idx = expert_index_for_domain(bundle, expert_domain);
      double conf = 0.0;
      std::size_t hits = 0;
      for (const LabeledExample& ex : bench.test) {
        if (ex.owner_domain != owner_domain) continue;
        if (std::find(shared_ids.begin(), shared_ids.end(), ex.cluster_id) == shared_ids.end()) {
          continue;
        }
        Vec out = calibrated_expert_output(bundle, expert_idx, ex.features);
        std::size_t pred = argmax(out);
        conf += out[pred];
        if (pred == ex.class_label) hits += 1;
        row.count += 1;
      }
      if (row.count > 0) {
        row.mean_confidence = conf / static_cast<double>(row.count);
        row.accuracy = static_cast<double>(hits) / static_cast<double>(row.count);
      }
      return row;
    };
    report.pair_phenotype.push_back(directional(pair.domain_a, pair.domain_b));
    report.pair_phenotype.push_back(directional(pair.domain_b, pair.domain_a));
  }

  report.entropy_distance_spearman = records_spearman(records);
  report.in_domain_test_accuracy = records_in_domain_accuracy(records);
  report.pre_finetune = pre_finetune;

  report.calibration.mode = to_string(bundle.calibration_mode);
  report.calibration.temperature = bundle.temperature;
  report.calibration.adaptive_a = bundle.adaptive.a;
  report.calibration.adaptive_b = bundle.adaptive.b;
  report.calibration.test_ece = report.phenotype.ece;

  struct SignalDef {
    const char* name;
    std::function<std::optional<double>(const DecisionRecord&)> get;
  };
  std::vector<SignalDef> signal_defs = {
      {"confidence", [](const DecisionRecord& r) { return std::optional<double>(r.confidence); }},
      {"pred_entropy", [](const DecisionRecord& r) { return std::optional<double>(r.pred_entropy); }},
      {"msp_score", [](const DecisionRecord& r) { return std::optional<double>(r.msp_score); }},
      {"centroid_distance",
       [](const DecisionRecord& r) { return std::optional<double>(r.centroid_distance); }},
      {"routing_entropy",
       [](const DecisionRecord& r) { return std::optional<double>(r.routing_entropy); }},
      {"coverage_affinity",
       [](const DecisionRecord& r) { return std::optional<double>(r.coverage_affinity); }},
      {"margin", [](const DecisionRecord& r) { return std::optional<double>(r.margin); }},
      {"vote_disagreement", [](const DecisionRecord& r) { return r.vote_disagreement; }},
      {"disagreement_jsd", [](const DecisionRecord& r) { return r.disagreement_jsd; }},
      {"predictive_variance", [](const DecisionRecord& r) { return r.predictive_variance; }},
      {"meta_reliability", [](const DecisionRecord& r) { return r.meta_reliability; }},
      {"min_activated_ood",
       [](const DecisionRecord& r) { return std::optional<double>(r.min_activated_ood); }},
  };
  for (const SignalDef& def : signal_defs) {
    SignalSummary sum;
    sum.name = def.name;
    double total = 0.0;
    for (const DecisionRecord& r : records) {
      std::optional<double> v = def.get(r);
      if (!v.has_value()) continue;
      if (sum.count == 0) {
        sum.min = sum.max = *v;
      } else {
        sum.min = std::min(sum.min, *v);
        sum.max = std::max(sum.max, *v);
      }
      total += *v;
      sum.count += 1;
    }
    if (sum.count > 0) sum.mean = total / static_cast<double>(sum.count);
    report.monitoring.signals.push_back(std::move(sum));
  }
  report.monitoring.verdict_counts = {{"in_coverage", 0}, {"boundary_violation", 0},
                                      {"coverage_gap", 0}};
  report.monitoring.action_counts = {{"answer", 0}, {"caveat", 0}, {"abstain", 0}, {"fallback", 0}};
  for (const DecisionRecord& r : records) {
    report.monitoring.verdict_counts[to_string(r.verdict)] += 1;
    report.monitoring.action_counts[to_string(r.action)] += 1;
  }
  return report;
}

RunPaths run_paths(const std::string& dir) {
  RunPaths p;
  p.dir = dir;
  p.config = dir + "/config.txt";
  p.benchmark = dir + "/benchmark.txt";
  p.model = dir + "/model.ckpt";
  p.decision_log = dir + "/decision_log.csv";
  p.report = dir + "/report.json";
  p.timings = dir + "/timings.csv";
  p.status = dir + "/status.txt";
  return p;
}

RunOutcome run_pipeline(const ExperimentConfig& config, const std::string& out_dir) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw StorageError("cannot create run directory " + out_dir + ": " + ec.message());

  RunPaths paths = run_paths(out_dir);
  RunOutcome outcome;
  outcome.config = config;
  write_text_file(paths.config, serialize_experiment_config(config));

  Rng master(config.seed);
  auto seed_for = [&](std::uint64_t stream) {
    Rng r = master.split(stream);
    return r.next_u64();
  };

  // Ablation switches fold into the effective settings; the stored config
  // keeps the user's values.
  RouterSettings settings = config.router;
  if (!config.multi_expert_on) settings.top_k = 1;
  if (!config.boundary_losses_on) {
    settings.lambda_boundary = 0.0;
    settings.lambda_coverage = 0.0;
  }

  std::vector<std::string> stages_run;
  auto stage = [&](const char* name, auto&& body) {
    write_text_file(paths.status, std::string("incomplete ") + name + "\n");
    auto t0 = std::chrono::steady_clock::now();
    try {
      body();
    } catch (const std::exception& e) {
      throw PipelineError(std::string("stage '") + name + "' failed: " + e.what());
    }
    std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    outcome.timings.push_back({name, dt.count()});
    stages_run.push_back(name);
  };

  stage("synth", [&] {
    outcome.benchmark = build_benchmark(config.benchmark);
    save_benchmark(outcome.benchmark, paths.benchmark);
  });
  const Benchmark& bench = outcome.benchmark;

  ModelBundle& bundle = outcome.bundle;

  stage("train_experts", [&] {
    for (std::size_t d = 0; d < config.benchmark.num_domains; ++d) {
      std::vector<LabeledExample> train_d, val_d;
      for (const LabeledExample& ex : bench.train) {
        if (ex.owner_domain == static_cast<int>(d)) train_d.push_back(ex);
      }
      for (const LabeledExample& ex : bench.val) {
        if (ex.owner_domain == static_cast<int>(d)) val_d.push_back(ex);
      }
      TrainHyperparams hp = config.expert_train;
      hp.seed = seed_for(10 + d);
      hp.mix_streams = config.mix_streams_on ? config.mix_streams : 0;
      auto [expert, rep] =
          train_expert(static_cast<int>(d), train_d, val_d, config.benchmark.classes, hp);
      bundle.experts.push_back(std::move(expert));
      outcome.expert_reports.push_back(rep);
    }
  });

  stage("embed", [&] {
    bundle.embed_net = make_embedding_net(config.benchmark.feature_dim(), config.embed_hidden_dim,
                                          config.embedding_dim, seed_for(20));
    if (config.contrastive_on) {
      std::vector<ContrastivePair> pairs =
          make_contrastive_pairs(bench, config.contrastive_pairs_per_relation, seed_for(21));
      ContrastiveHyperparams hp = config.contrastive;
      hp.seed = seed_for(22);
      outcome.contrastive_report = contrastive_embed_train(bundle.embed_net, bench.train, pairs, hp);
    }
  });

  // Expert statistics always come from the final embedding geometry.
  stage("fit_stats", [&] {
    for (std::size_t d = 0; d < config.benchmark.num_domains; ++d) {
      std::vector<LabeledExample> train_d;
      for (const LabeledExample& ex : bench.train) {
        if (ex.owner_domain == static_cast<int>(d)) train_d.push_back(ex);
      }
      bundle.stats.push_back(fit_expert_stats(bundle.embed_net, train_d));
    }
  });

  stage("train_router", [&] {
    RouterTrainHyperparams hp = config.router_train;
    hp.seed = seed_for(30);
    bundle.router =
        make_router(config.embedding_dim, config.benchmark.num_domains, settings, hp);
    outcome.router_report = train_router(bundle.router, bundle.embed_net, bundle.stats,
                                         bench.train, hp);
  });

  std::optional<PreFinetuneSnapshot> pre_finetune;
  auto finetune_stage = [&] {
    stage("pre_finetune_eval", [&] {
      std::vector<DecisionRecord> pre = evaluate_split(bundle, config, bench.test);
      PreFinetuneSnapshot snap;
      snap.entropy_distance_spearman = records_spearman(pre);
      snap.in_domain_test_accuracy = records_in_domain_accuracy(pre);
      pre_finetune = snap;
    });
    stage("boundary_finetune", [&] {
      for (std::size_t d = 0; d < bundle.experts.size(); ++d) {
        const DomainSpec& spec = bench.domains[d];
        // The anchor stream is the expert's private clusters only. Its own
        // shared-cluster samples belong to the flatten stream instead;
        // keeping them under cross entropy would fight the flattening on
        // exactly the inputs it is meant to cover.
        std::vector<LabeledExample> own, boundary;
        for (const LabeledExample& ex : bench.train) {
          if (ex.owner_domain == spec.domain_id && ex.case_tag == CaseTag::kInDomain) {
            own.push_back(ex);
          }
          if (ex.case_tag == CaseTag::kBoundary &&
              std::find(spec.shared_cluster_ids.begin(), spec.shared_cluster_ids.end(),
                        ex.cluster_id) != spec.shared_cluster_ids.end()) {
            boundary.push_back(ex);
          }
        }
        FinetuneHyperparams hp = config.finetune;
        hp.seed = seed_for(40 + d);
        outcome.finetune_reports.push_back(
            boundary_aware_finetune(bundle.experts[d], own, boundary, hp));
      }
    });
  };
  auto calibration_stage = [&] {
    if (config.calibration_mode == CalibrationMode::kNone) return;
    stage("fit_calibration", [&] {
      std::vector<Vec> logits;
      std::vector<std::size_t> labels;
      logits.reserve(bench.val.size());
      for (const LabeledExample& ex : bench.val) {
        Vec e = embed(bundle.embed_net, ex.features);
        RoutingDecision d = route(bundle.router, bundle.stats, e);
        logits.push_back(mlp_forward(bundle.experts[d.selected[0]].net, ex.features));
        labels.push_back(ex.class_label);
      }
      if (config.calibration_mode == CalibrationMode::kTemperature) {
        bundle.temperature = fit_temperature(logits, labels).temperature;
      } else {
        bundle.adaptive = fit_adaptive_temperature(logits, labels);
      }
      bundle.calibration_mode = config.calibration_mode;
    });
  };

  if (config.boundary_finetune_on) {
    if (config.finetune_before_temperature) {
      finetune_stage();
      calibration_stage();
    } else {
      calibration_stage();
      finetune_stage();
    }
  } else {
    calibration_stage();
  }

  if (config.meta_expert_on) {
    stage("train_meta", [&] {
      std::vector<Vec> inputs;
      std::vector<CaseTag> meta_tags;
      inputs.reserve(bench.train.size());
      for (const LabeledExample& ex : bench.train) {
        QueryContext ctx = compute_query_context(bundle, config, ex.features);
        inputs.push_back(assemble_meta_input(config.meta_input_mode, ctx.embedding,
                                             ctx.all_outputs, ctx.decision, ctx.report));
        meta_tags.push_back(ex.case_tag);
      }
      MetaTrainHyperparams hp = config.meta_train;
      hp.seed = seed_for(50);
      auto [meta, rep] = train_meta_expert(inputs, meta_tags, config.meta_input_mode, hp);
      bundle.meta = std::move(meta);
      outcome.meta_report = rep;
    });
  }

  stage("save_models", [&] { save_model_bundle(bundle, paths.model); });

  stage("evaluate", [&] {
    outcome.decisions = evaluate_split(bundle, config, bench.test);
    write_text_file(paths.decision_log, decision_log_to_csv(outcome.decisions));
  });

  stage("report", [&] {
    outcome.report = build_metrics_report(config, bench, bundle, outcome.decisions, pre_finetune,
                                          stages_run);
    save_metrics_report(outcome.report, paths.report);
  });

  std::string timings_csv = "stage,seconds\n";
  for (const StageTiming& t : outcome.timings) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", t.seconds);
    timings_csv += t.stage + "," + buf + "\n";
  }
  write_text_file(paths.timings, timings_csv);
  write_text_file(paths.status, "complete\n");
  return outcome;
}

MetricsReport replay_run(const std::string& run_dir) {
  RunPaths paths = run_paths(run_dir);
  std::string status = trim(read_text_file(paths.status));
  if (status != "complete") {
    throw PipelineError("run at " + run_dir + " is not complete (status: " + status + ")");
  }
  ExperimentConfig config = load_experiment_config(paths.config);
  Benchmark bench = load_benchmark(paths.benchmark);
  ModelBundle bundle = load_model_bundle(paths.model);

  std::string stored_log = read_text_file(paths.decision_log);
  std::string stored_report_text = read_text_file(paths.report);
  MetricsReport stored_report = metrics_report_from_json(stored_report_text, paths.report);

  std::vector<DecisionRecord> records = evaluate_split(bundle, config, bench.test);
  std::string replay_log = decision_log_to_csv(records);
  if (replay_log != stored_log) {
    throw PipelineError("replay of " + run_dir + " produced a different decision log");
  }
  MetricsReport replay = build_metrics_report(config, bench, bundle, records,
                                              stored_report.pre_finetune, stored_report.stages_run);
  if (metrics_report_to_json(replay) != stored_report_text) {
    throw PipelineError("replay of " + run_dir + " produced a different metrics report");
  }
  return replay;
}

}  // namespace moebound
