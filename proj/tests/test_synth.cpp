#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "moebound/synth.hpp"
#include "moebound/textio.hpp"

using namespace moebound;

namespace {

std::filesystem::path scratch_dir() {
  auto dir = std::filesystem::temp_directory_path() / "moebound_test_synth";
  std::filesystem::create_directories(dir);
  return dir;
}

std::size_t total_clusters(const BenchmarkConfig& cfg) {
  std::size_t shared = 0;
  for (const FalseFriendPair& p : cfg.false_friend_pairs) shared += p.shared_clusters;
  return cfg.num_domains * cfg.private_clusters_per_domain + shared + cfg.gap_clusters;
}

}  // namespace

TEST_CASE("split sizes are exact") {
  BenchmarkConfig cfg;  // defaults
  Benchmark bench = build_benchmark(cfg);
  std::size_t clusters = total_clusters(cfg);
  CHECK(bench.clusters.size() == clusters);
  CHECK(bench.train.size() == cfg.samples_per_cluster.train * clusters);
  CHECK(bench.val.size() == cfg.samples_per_cluster.val * clusters);
  CHECK(bench.test.size() == cfg.samples_per_cluster.test * clusters);
}

TEST_CASE("generation is a pure function of the config") {
  BenchmarkConfig cfg;
  Benchmark a = build_benchmark(cfg);
  Benchmark b = build_benchmark(cfg);
  CHECK(a == b);
  CHECK(a.content_hash() == b.content_hash());

  cfg.seed = 43;
  Benchmark c = build_benchmark(cfg);
  CHECK(a.content_hash() != c.content_hash());
}

TEST_CASE("labels follow the hidden owner") {
  Benchmark bench = build_benchmark(BenchmarkConfig{});
  bool saw_private = false, saw_boundary = false, saw_gap = false;
  for (const LabeledExample& ex : bench.train) {
    if (ex.case_tag == CaseTag::kInDomain && !saw_private) {
      const DomainSpec& d = bench.domains[static_cast<std::size_t>(ex.owner_domain)];
      CHECK(ex.class_label == affine_label(d.labeler, ex.features));
      CHECK(ex.class_label == label_oracle(bench, ex.features, ex.owner_domain));
      saw_private = true;
    }
    if (ex.case_tag == CaseTag::kBoundary && !saw_boundary) {
      // The label comes from the hidden owner's map even though the cluster
      // is shared with the counterpart domain.
      const DomainSpec& owner = bench.domains[static_cast<std::size_t>(ex.owner_domain)];
      CHECK(ex.class_label == affine_label(owner.labeler, ex.features));
      const ClusterSpec& cluster = bench.clusters[ex.cluster_id];
      CHECK(cluster.kind == ClusterKind::kShared);
      CHECK((cluster.owner_a == ex.owner_domain || cluster.owner_b == ex.owner_domain));
      saw_boundary = true;
    }
    if (ex.case_tag == CaseTag::kGap && !saw_gap) {
      CHECK(ex.owner_domain == kGapOwner);
      CHECK(ex.class_label == affine_label(bench.gap_labeler, ex.features));
      CHECK(bench.clusters[ex.cluster_id].kind == ClusterKind::kGap);
      saw_gap = true;
    }
  }
  CHECK(saw_private);
  CHECK(saw_boundary);
  CHECK(saw_gap);
  CHECK_THROWS_AS(label_oracle(bench, bench.train[0].features, 99), LookupError);
}

TEST_CASE("boundary owners disagree on shared clusters") {
  Benchmark bench = build_benchmark(BenchmarkConfig{});
  // On every shared cluster the two owners' label maps must actually differ,
  // otherwise there is no false friend to study.
  for (const FalseFriendPair& pair : bench.config.false_friend_pairs) {
    std::size_t disagreements = 0, count = 0;
    const DomainSpec& da = bench.domains[static_cast<std::size_t>(pair.domain_a)];
    const DomainSpec& db = bench.domains[static_cast<std::size_t>(pair.domain_b)];
    for (const LabeledExample& ex : bench.train) {
      if (ex.case_tag != CaseTag::kBoundary) continue;
      const ClusterSpec& cluster = bench.clusters[ex.cluster_id];
      if (cluster.owner_a != pair.domain_a || cluster.owner_b != pair.domain_b) continue;
      count += 1;
      if (affine_label(da.labeler, ex.features) != affine_label(db.labeler, ex.features)) {
        disagreements += 1;
      }
    }
    CHECK(count > 0);
    CHECK(static_cast<double>(disagreements) >=
          bench.config.min_divergence * static_cast<double>(count));
  }
}

TEST_CASE("context codes") {
  Vec gap_code = owner_context_code(kGapOwner, 4, 2);
  for (double v : gap_code) CHECK(v == 0.0);
  CHECK(owner_context_code(0, 4, 2) != owner_context_code(1, 4, 2));

  // kappa = 0 erases the recoverable context but generation still works.
  BenchmarkConfig cfg;
  cfg.context_informativeness = 0.0;
  Benchmark bench = build_benchmark(cfg);
  CHECK(bench.train.size() > 0);
}

TEST_CASE("contrastive pair construction") {
  Benchmark bench = build_benchmark(BenchmarkConfig{});
  CHECK(make_contrastive_pairs(bench, 0, 9).empty());

  std::vector<ContrastivePair> pairs = make_contrastive_pairs(bench, 100, 9);
  CHECK(pairs.size() == 200);  // 100 same-domain plus 100 false-friend
  std::size_t same = 0, ff = 0;
  for (const ContrastivePair& p : pairs) {
    const LabeledExample& a = bench.train[p.anchor_index];
    const LabeledExample& o = bench.train[p.other_index];
    if (p.relation == PairRelation::kSameDomain) {
      same += 1;
      CHECK(a.owner_domain == o.owner_domain);
    } else {
      ff += 1;
      CHECK(a.cluster_id == o.cluster_id);  // same surface, different owner
      CHECK(a.owner_domain != o.owner_domain);
    }
  }
  CHECK(same == 100);
  CHECK(ff == 100);

  std::vector<ContrastivePair> again = make_contrastive_pairs(bench, 100, 9);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(pairs[i].anchor_index == again[i].anchor_index);
    CHECK(pairs[i].other_index == again[i].other_index);
  }
}

TEST_CASE("benchmark round-trips through disk") {
  Benchmark bench = build_benchmark(BenchmarkConfig{});
  auto path = (scratch_dir() / "bench.txt").string();
  save_benchmark(bench, path);
  Benchmark loaded = load_benchmark(path);
  CHECK(loaded == bench);

  // Truncation surfaces as a parse error, never a partial benchmark.
  std::string bytes = read_text_file(path);
  auto cut = (scratch_dir() / "bench_cut.txt").string();
  write_text_file(cut, bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(load_benchmark(cut), ParseError);
  std::remove(path.c_str());
  std::remove(cut.c_str());
}

TEST_CASE("degenerate configs are rejected up front") {
  BenchmarkConfig empty;
  empty.private_clusters_per_domain = 0;
  empty.false_friend_pairs.clear();
  empty.gap_clusters = 0;
  CHECK_THROWS_AS(empty.validate(), ConfigError);

  BenchmarkConfig bad_pair;
  bad_pair.false_friend_pairs = {{0, 7, 1}};  // domain 7 does not exist
  CHECK_THROWS_AS(bad_pair.validate(), ConfigError);
}
