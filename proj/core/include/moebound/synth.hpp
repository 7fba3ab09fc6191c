#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "moebound/numerics.hpp"

namespace moebound {

// Owner id used for samples that belong to no domain.
inline constexpr int kGapOwner = -1;

enum class CaseTag { kInDomain, kBoundary, kGap };

const char* to_string(CaseTag tag);
CaseTag case_tag_from_string(const std::string& s);

struct FalseFriendPair {
  int domain_a = 0;
  int domain_b = 0;
  std::size_t shared_clusters = 0;

  friend bool operator==(const FalseFriendPair&, const FalseFriendPair&) = default;
};

struct SplitSizes {
  std::size_t train = 200;
  std::size_t val = 50;
  std::size_t test = 100;

  friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

struct BenchmarkConfig {
  std::size_t input_dim = 16;
  std::size_t num_domains = 4;
  std::size_t classes = 3;
  std::size_t private_clusters_per_domain = 3;
  std::vector<FalseFriendPair> false_friend_pairs = {{0, 1, 2}, {2, 3, 1}};
  std::size_t gap_clusters = 2;
  double cluster_sigma = 0.15;
  double context_informativeness = 0.3;  // weight of the owner code vs noise
  std::size_t context_dims = 2;
  SplitSizes samples_per_cluster;
  double min_divergence = 0.5;  // required label disagreement on shared clusters
  std::uint64_t seed = 42;

  std::size_t feature_dim() const { return input_dim + context_dims; }
  void validate() const;  // throws ConfigError

  friend bool operator==(const BenchmarkConfig&, const BenchmarkConfig&) = default;
};

enum class ClusterKind { kPrivate, kShared, kGap };

struct ClusterSpec {
  std::size_t id = 0;
  ClusterKind kind = ClusterKind::kPrivate;
  int owner_a = kGapOwner;  // private: the owner; shared: first domain of the pair
  int owner_b = kGapOwner;  // shared: second domain of the pair
  Vec center;               // length input_dim

  friend bool operator==(const ClusterSpec&, const ClusterSpec&) = default;
};

// Ground-truth label rule: class = argmax(map * features + bias), ties going
// to the lowest class index.
struct AffineLabeler {
  Mat map;   // classes x feature_dim
  Vec bias;  // classes

  friend bool operator==(const AffineLabeler&, const AffineLabeler&) = default;
};

std::size_t affine_label(const AffineLabeler& labeler, const Vec& features);

struct DomainSpec {
  int domain_id = 0;
  AffineLabeler labeler;
  std::vector<std::size_t> private_cluster_ids;
  std::vector<std::size_t> shared_cluster_ids;

  friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

struct LabeledExample {
  Vec features;  // input_dim cluster coordinates then context_dims context
  std::size_t class_label = 0;
  int owner_domain = kGapOwner;
  std::size_t cluster_id = 0;
  CaseTag case_tag = CaseTag::kInDomain;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

struct Benchmark {
  BenchmarkConfig config;
  std::vector<ClusterSpec> clusters;
  std::vector<DomainSpec> domains;
  AffineLabeler gap_labeler;
  std::vector<LabeledExample> train, val, test;

  // FNV-1a over the serialized form; identity check for run comparisons.
  std::uint64_t content_hash() const;

  friend bool operator==(const Benchmark&, const Benchmark&) = default;
};

// The deterministic context code for a domain, length context_dims. Gap
// samples carry the zero code.
Vec owner_context_code(int owner, std::size_t num_domains, std::size_t context_dims);

// Exact ground truth for any feature vector: the owner's labeler (or the gap
// labeler for owner == kGapOwner). Unknown owner id throws LookupError.
std::size_t label_oracle(const Benchmark& bench, const Vec& features, int owner);

// Generates the full benchmark from config alone. Label maps on every
// false-friend pair are resampled until the two owners disagree on at least
// min_divergence of that pair's shared samples, per owner and per split;
// GenerationError names the pair if the budget runs out.
Benchmark build_benchmark(const BenchmarkConfig& config);

enum class PairRelation { kSameDomain, kFalseFriend };

struct ContrastivePair {
  std::size_t anchor_index = 0;  // indices into bench.train
  std::size_t other_index = 0;
  PairRelation relation = PairRelation::kSameDomain;
};

// Training pairs for the embedding stage: same-domain pairs pulled together,
// same-cluster different-owner (false friend) pairs pushed apart.
std::vector<ContrastivePair> make_contrastive_pairs(const Benchmark& bench,
                                                    std::size_t pairs_per_relation,
                                                    std::uint64_t seed);

void save_benchmark(const Benchmark& bench, const std::string& path);
Benchmark load_benchmark(const std::string& path);

}  // namespace moebound
