#include "moebound/experts.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace moebound {

namespace {

double mean_xent(const MlpParams& net, const std::vector<const LabeledExample*>& data) {
  double total = 0.0;
  for (const LabeledExample* ex : data) {
    Vec logits = mlp_forward(net, ex->features);
    total += softmax_cross_entropy(logits, ex->class_label).loss;
  }
  return total / static_cast<double>(data.size());
}

double accuracy(const MlpParams& net, const std::vector<const LabeledExample*>& data) {
  if (data.empty()) return 0.0;
  std::size_t hits = 0;
  for (const LabeledExample* ex : data) {
    Vec logits = mlp_forward(net, ex->features);
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
      if (logits[i] > logits[best]) best = i;
    }
    if (best == ex->class_label) hits += 1;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace

std::pair<ExpertModel, TrainReport> train_expert(int domain_id,
                                                 const std::vector<LabeledExample>& train_split,
                                                 const std::vector<LabeledExample>& val_split,
                                                 std::size_t classes,
                                                 const TrainHyperparams& hp) {
  if (train_split.empty()) {
    throw TrainingError("train_expert: domain " + std::to_string(domain_id) +
                        " has no training samples");
  }
  if (classes < 2) throw ParameterError("train_expert: need at least two classes");
  if (hp.batch_size == 0) {
    throw ParameterError("train_expert: batch_size must be positive");
  }
  // epochs == 0 is legal: the caller gets the seeded initialization with its
  // accuracies measured, which is the natural baseline for training curves.
  std::vector<const LabeledExample*> train, val;
  for (const LabeledExample& ex : train_split) {
    if (ex.owner_domain != domain_id) {
      throw TrainingError("train_expert: sample owned by domain " +
                          std::to_string(ex.owner_domain) + " passed to expert " +
                          std::to_string(domain_id));
    }
    if (ex.class_label >= classes) {
      throw TrainingError("train_expert: class label " + std::to_string(ex.class_label) +
                          " outside [0, " + std::to_string(classes) + ")");
    }
    train.push_back(&ex);
  }
  for (const LabeledExample& ex : val_split) val.push_back(&ex);

  Rng rng(hp.seed);
  Rng init_rng = rng.split(1);
  Rng shuffle_rng = rng.split(2);

  ExpertModel expert;
  expert.domain_id = domain_id;
  expert.net = make_mlp({train[0]->features.size(), hp.hidden_dim, classes}, init_rng);
  if (hp.mix_streams > 0) {
    Rng mix_rng = rng.split(3);
    expert.net.mix_streams = hp.mix_streams;
    expert.net.mix = random_doubly_stochastic(hp.mix_streams, mix_rng);
    expert.net.validate();
  }

  TrainReport report;
  report.initial_loss = mean_xent(expert.net, train);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  OptimizerState opt{hp.learning_rate, 0};
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      std::size_t end = std::min(order.size(), start + hp.batch_size);
      MlpParams grads = zeros_like(expert.net);
      double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const LabeledExample* ex = train[order[i]];
        ForwardCache cache;
        Vec logits = mlp_forward(expert.net, ex->features, &cache);
        SoftmaxXent xent = softmax_cross_entropy(logits, ex->class_label);
        accumulate(grads, mlp_backward(expert.net, cache, xent.dlogits), inv);
      }
      sgd_step(expert.net, grads, opt);
    }
    report.epochs_run += 1;
  }

  report.final_loss = mean_xent(expert.net, train);
  report.train_accuracy = accuracy(expert.net, train);
  report.val_accuracy = accuracy(expert.net, val);
  if (!std::isfinite(report.final_loss)) {
    throw TrainingError("train_expert: loss diverged for domain " + std::to_string(domain_id));
  }
  return {std::move(expert), report};
}

Vec expert_predict(const ExpertModel& expert, const Vec& features) {
  return softmax(mlp_forward(expert.net, features));
}

MlpParams make_embedding_net(std::size_t feature_dim, std::size_t hidden_dim,
                             std::size_t embed_dim, std::uint64_t seed) {
  Rng rng(seed);
  return make_mlp({feature_dim, hidden_dim, embed_dim}, rng);
}

Vec embed(const MlpParams& embed_net, const Vec& features) {
  return mlp_forward(embed_net, features);
}

namespace {

double pair_distance(const MlpParams& net, const LabeledExample& a, const LabeledExample& b) {
  Vec ea = mlp_forward(net, a.features);
  Vec eb = mlp_forward(net, b.features);
  double d2 = 0.0;
  for (std::size_t i = 0; i < ea.size(); ++i) d2 += (ea[i] - eb[i]) * (ea[i] - eb[i]);
  return std::sqrt(d2);
}

struct PairEval {
  double loss;
  double distance;
};

PairEval pair_loss(double distance, PairRelation relation, double margin) {
  if (relation == PairRelation::kSameDomain) return {distance * distance, distance};
  double gap = margin - distance;
  return {gap > 0.0 ? gap * gap : 0.0, distance};
}

}  // namespace

ContrastiveReport contrastive_embed_train(MlpParams& embed_net,
                                          const std::vector<LabeledExample>& train_split,
                                          const std::vector<ContrastivePair>& pairs,
                                          const ContrastiveHyperparams& hp) {
  if (pairs.empty()) throw TrainingError("contrastive_embed_train: no pairs");
  if (hp.batch_size == 0) throw ParameterError("contrastive_embed_train: batch_size must be positive");
  if (!(hp.margin > 0.0)) throw ParameterError("contrastive_embed_train: margin must be positive");
  for (const ContrastivePair& p : pairs) {
    if (p.anchor_index >= train_split.size() || p.other_index >= train_split.size()) {
      throw LookupError("contrastive_embed_train: pair index outside the training split");
    }
  }

  auto mean_metrics = [&](ContrastiveReport& r, bool before) {
    double loss = 0.0, same_d = 0.0, ff_d = 0.0;
    std::size_t same_n = 0, ff_n = 0;
    for (const ContrastivePair& p : pairs) {
      double d = pair_distance(embed_net, train_split[p.anchor_index], train_split[p.other_index]);
      loss += pair_loss(d, p.relation, hp.margin).loss;
      if (p.relation == PairRelation::kSameDomain) {
        same_d += d;
        same_n += 1;
      } else {
        ff_d += d;
        ff_n += 1;
      }
    }
    loss /= static_cast<double>(pairs.size());
    double sm = same_n ? same_d / static_cast<double>(same_n) : 0.0;
    double fm = ff_n ? ff_d / static_cast<double>(ff_n) : 0.0;
    if (before) {
      r.initial_loss = loss;
      r.same_domain_distance_before = sm;
      r.false_friend_distance_before = fm;
    } else {
      r.final_loss = loss;
      r.same_domain_distance_after = sm;
      r.false_friend_distance_after = fm;
    }
  };

  ContrastiveReport report;
  mean_metrics(report, true);

  Rng shuffle_rng = Rng(hp.seed).split(1);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  OptimizerState opt{hp.learning_rate, 0};
  for (std::size_t epoch = 0; epoch < hp.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
      std::size_t end = std::min(order.size(), start + hp.batch_size);
      MlpParams grads = zeros_like(embed_net);
      double inv = 1.0 / static_cast<double>(end - start);
      bool any = false;
      for (std::size_t i = start; i < end; ++i) {
        const ContrastivePair& p = pairs[order[i]];
        ForwardCache ca, cb;
        Vec ea = mlp_forward(embed_net, train_split[p.anchor_index].features, &ca);
        Vec eb = mlp_forward(embed_net, train_split[p.other_index].features, &cb);
        Vec diff(ea.size());
        double d2 = 0.0;
        for (std::size_t j = 0; j < ea.size(); ++j) {
          diff[j] = ea[j] - eb[j];
          d2 += diff[j] * diff[j];
        }
        double d = std::sqrt(d2);
        Vec da(ea.size(), 0.0);
        if (p.relation == PairRelation::kSameDomain) {
          for (std::size_t j = 0; j < ea.size(); ++j) da[j] = 2.0 * diff[j];
        } else {
          double gap = hp.margin - d;
          // Satisfied pairs and the degenerate d = 0 point contribute nothing.
          if (gap <= 0.0 || d == 0.0) continue;
          for (std::size_t j = 0; j < ea.size(); ++j) da[j] = -2.0 * gap * diff[j] / d;
        }
        Vec db(da.size());
        for (std::size_t j = 0; j < da.size(); ++j) db[j] = -da[j];
        accumulate(grads, mlp_backward(embed_net, ca, da), inv);
        accumulate(grads, mlp_backward(embed_net, cb, db), inv);
        any = true;
      }
      if (any) sgd_step(embed_net, grads, opt);
    }
  }

  mean_metrics(report, false);
  if (!std::isfinite(report.final_loss)) {
    throw TrainingError("contrastive_embed_train: loss diverged");
  }
  return report;
}

ExpertStats fit_expert_stats(const MlpParams& embed_net,
                             const std::vector<LabeledExample>& domain_samples) {
  if (domain_samples.empty()) throw TrainingError("fit_expert_stats: empty dataset");
  std::size_t dim = embed_net.output_dim();
  ExpertStats stats;
  stats.centroid.assign(dim, 0.0);
  stats.variance.assign(dim, 0.0);
  stats.sample_count = domain_samples.size();
  std::vector<Vec> embeddings;
  embeddings.reserve(domain_samples.size());
  for (const LabeledExample& ex : domain_samples) {
    embeddings.push_back(mlp_forward(embed_net, ex.features));
    for (std::size_t j = 0; j < dim; ++j) stats.centroid[j] += embeddings.back()[j];
  }
  double inv_n = 1.0 / static_cast<double>(domain_samples.size());
  for (std::size_t j = 0; j < dim; ++j) stats.centroid[j] *= inv_n;
  for (const Vec& e : embeddings) {
    for (std::size_t j = 0; j < dim; ++j) {
      double d = e[j] - stats.centroid[j];
      stats.variance[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < dim; ++j) {
    stats.variance[j] = std::max(stats.variance[j] * inv_n, kVarianceFloor);
  }
  return stats;
}

double ood_score(const ExpertStats& stats, const Vec& embedding) {
  if (embedding.size() != stats.centroid.size()) {
    throw DimensionError("ood_score: embedding length " + std::to_string(embedding.size()) +
                         " vs stats dimension " + std::to_string(stats.centroid.size()));
  }
  check_finite(embedding, "ood_score");
  double acc = 0.0;
  for (std::size_t j = 0; j < embedding.size(); ++j) {
    double d = embedding[j] - stats.centroid[j];
    acc += d * d / stats.variance[j];
  }
  return std::sqrt(acc);
}

}  // namespace moebound
