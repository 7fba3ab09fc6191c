#pragma once

#include "moebound/mhc.hpp"
#include "moebound/numerics.hpp"
#include "moebound/synth.hpp"

namespace moebound {

// Per-dimension variance floor for expert statistics. Keeps the normalized
// distance finite when an embedding dimension collapses.
inline constexpr double kVarianceFloor = 1e-6;

struct ExpertModel {
  int domain_id = kGapOwner;
  MlpParams net;  // feature_dim -> hidden -> classes

  friend bool operator==(const ExpertModel&, const ExpertModel&) = default;
};

struct TrainHyperparams {
  std::size_t hidden_dim = 32;
  std::size_t epochs = 40;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  std::size_t mix_streams = 0;  // 0 = no stream mixing in the hidden layer
};

struct TrainReport {
  std::size_t epochs_run = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double train_accuracy = 0.0;
  double val_accuracy = 0.0;
};

// Supervised training of one domain expert on that domain's samples only.
// Every sample must carry owner_domain == domain_id; the mix matrix, when
// streams are enabled, is drawn once from the seed and stays fixed.
std::pair<ExpertModel, TrainReport> train_expert(int domain_id,
                                                 const std::vector<LabeledExample>& train_split,
                                                 const std::vector<LabeledExample>& val_split,
                                                 std::size_t classes,
                                                 const TrainHyperparams& hp);

Vec expert_predict(const ExpertModel& expert, const Vec& features);  // class distribution

// Shared embedding net used by routing: feature_dim -> hidden -> embed dim,
// linear output.
MlpParams make_embedding_net(std::size_t feature_dim, std::size_t hidden_dim,
                             std::size_t embed_dim, std::uint64_t seed);

Vec embed(const MlpParams& embed_net, const Vec& features);

struct ContrastiveHyperparams {
  double margin = 1.0;
  std::size_t epochs = 30;
  double learning_rate = 0.05;
  std::size_t batch_size = 32;
  std::uint64_t seed = 2;
};

struct ContrastiveReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  double same_domain_distance_before = 0.0;
  double same_domain_distance_after = 0.0;
  double false_friend_distance_before = 0.0;
  double false_friend_distance_after = 0.0;
};

// Siamese training of the embedding net: same-domain pairs are pulled
// together (squared distance), false-friend pairs pushed to the margin
// (squared hinge). Pairs already past the margin contribute exactly zero
// loss and zero gradient.
ContrastiveReport contrastive_embed_train(MlpParams& embed_net,
                                          const std::vector<LabeledExample>& train_split,
                                          const std::vector<ContrastivePair>& pairs,
                                          const ContrastiveHyperparams& hp);

struct ExpertStats {
  Vec centroid;  // embedding-space mean of the expert's training data
  Vec variance;  // per-dimension, floored at kVarianceFloor
  std::size_t sample_count = 0;

  friend bool operator==(const ExpertStats&, const ExpertStats&) = default;
};

ExpertStats fit_expert_stats(const MlpParams& embed_net,
                             const std::vector<LabeledExample>& domain_samples);

// Variance-normalized distance of an embedding from the expert's centroid
// (diagonal Mahalanobis). In-distribution points score near sqrt(dim).
double ood_score(const ExpertStats& stats, const Vec& embedding);

}  // namespace moebound
