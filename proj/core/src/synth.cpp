#include "moebound/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "moebound/textio.hpp"

namespace moebound {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr std::size_t kLabelerRetryBudget = 100;

// Stream ids hung off the benchmark seed. Values are arbitrary but frozen:
// changing them changes every generated dataset.
enum : std::uint64_t { kStreamCenters = 1, kStreamSamples = 2, kStreamLabelers = 3 };

}  // namespace

const char* to_string(CaseTag tag) {
  switch (tag) {
    case CaseTag::kInDomain: return "in_domain";
    case CaseTag::kBoundary: return "boundary";
    case CaseTag::kGap: return "gap";
  }
  throw LookupError("unknown case tag");
}

CaseTag case_tag_from_string(const std::string& s) {
  if (s == "in_domain") return CaseTag::kInDomain;
  if (s == "boundary") return CaseTag::kBoundary;
  if (s == "gap") return CaseTag::kGap;
  throw ParseError("unknown case tag '" + s + "'");
}

void BenchmarkConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("benchmark config: " + msg); };
  if (input_dim == 0) fail("input_dim must be positive");
  if (num_domains < 2) fail("num_domains must be at least 2");
  if (classes < 2) fail("classes must be at least 2");
  if (private_clusters_per_domain == 0) fail("private_clusters_per_domain must be positive");
  if (!(cluster_sigma > 0.0) || !std::isfinite(cluster_sigma)) fail("cluster_sigma must be positive");
  if (!(context_informativeness >= 0.0 && context_informativeness <= 1.0)) {
    fail("context_informativeness must lie in [0, 1]");
  }
  if (!(min_divergence >= 0.0 && min_divergence <= 1.0)) fail("min_divergence must lie in [0, 1]");
  if (samples_per_cluster.train == 0 || samples_per_cluster.val == 0 ||
      samples_per_cluster.test == 0) {
    fail("samples_per_cluster must be positive for every split");
  }
  for (const FalseFriendPair& p : false_friend_pairs) {
    if (p.domain_a < 0 || p.domain_b < 0 ||
        static_cast<std::size_t>(p.domain_a) >= num_domains ||
        static_cast<std::size_t>(p.domain_b) >= num_domains) {
      fail("false-friend pair references a domain outside [0, num_domains)");
    }
    if (p.domain_a == p.domain_b) fail("false-friend pair must join two distinct domains");
    if (p.shared_clusters == 0) fail("false-friend pair must share at least one cluster");
  }
}

std::size_t affine_label(const AffineLabeler& labeler, const Vec& features) {
  Vec scores = mat_vec(labeler.map, features);
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] += labeler.bias[i];
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;  // ties keep the lowest index
  }
  return best;
}

Vec owner_context_code(int owner, std::size_t num_domains, std::size_t context_dims) {
  Vec code(context_dims, 0.0);
  if (owner == kGapOwner) return code;
  double angle = kTwoPi * static_cast<double>(owner) / static_cast<double>(num_domains);
  for (std::size_t j = 0; j < context_dims; ++j) {
    code[j] = (j % 2 == 0) ? std::cos(angle) : std::sin(angle);
  }
  return code;
}

std::size_t label_oracle(const Benchmark& bench, const Vec& features, int owner) {
  if (features.size() != bench.config.feature_dim()) {
    throw DimensionError("label_oracle: feature length " + std::to_string(features.size()) +
                         ", benchmark wants " + std::to_string(bench.config.feature_dim()));
  }
  if (owner == kGapOwner) return affine_label(bench.gap_labeler, features);
  for (const DomainSpec& d : bench.domains) {
    if (d.domain_id == owner) return affine_label(d.labeler, features);
  }
  throw LookupError("label_oracle: unknown owner domain " + std::to_string(owner));
}

namespace {

AffineLabeler draw_labeler(std::size_t classes, std::size_t feature_dim, Rng& rng) {
  AffineLabeler lab;
  lab.map = Mat(classes, feature_dim);
  for (double& v : lab.map.values) v = rng.gaussian();
  lab.bias.resize(classes);
  // Small bias keeps the argmax input-driven instead of class-driven.
  for (double& v : lab.bias) v = 0.1 * rng.gaussian();
  return lab;
}

struct RawSample {
  Vec features;
  int owner;
  std::size_t cluster_id;
  CaseTag tag;
};

// Disagreement of the two pair labelers over one owner's shared samples.
// Empty subsets are treated as satisfied (nothing to measure).
bool pair_divergence_ok(const std::vector<RawSample>& split, const Benchmark& bench,
                        const FalseFriendPair& pair, const AffineLabeler& lab_a,
                        const AffineLabeler& lab_b, double min_divergence) {
  for (int owner : {pair.domain_a, pair.domain_b}) {
    std::size_t total = 0, differ = 0;
    for (const RawSample& s : split) {
      if (s.owner != owner) continue;
      const ClusterSpec& c = bench.clusters[s.cluster_id];
      if (c.kind != ClusterKind::kShared) continue;
      bool of_pair = (c.owner_a == pair.domain_a && c.owner_b == pair.domain_b) ||
                     (c.owner_a == pair.domain_b && c.owner_b == pair.domain_a);
      if (!of_pair) continue;
      total += 1;
      if (affine_label(lab_a, s.features) != affine_label(lab_b, s.features)) differ += 1;
    }
    if (total == 0) continue;
    if (static_cast<double>(differ) < min_divergence * static_cast<double>(total)) return false;
  }
  return true;
}

}  // namespace

Benchmark build_benchmark(const BenchmarkConfig& config) {
  config.validate();
  Benchmark bench;
  bench.config = config;

  Rng root(config.seed);
  Rng centers_rng = root.split(kStreamCenters);
  Rng samples_rng = root.split(kStreamSamples);
  Rng labelers_rng = root.split(kStreamLabelers);

  // Cluster layout: private clusters per domain, then the shared clusters of
  // each false-friend pair, then gap clusters. Ids follow this order.
  for (std::size_t d = 0; d < config.num_domains; ++d) {
    for (std::size_t i = 0; i < config.private_clusters_per_domain; ++i) {
      ClusterSpec c;
      c.id = bench.clusters.size();
      c.kind = ClusterKind::kPrivate;
      c.owner_a = static_cast<int>(d);
      bench.clusters.push_back(std::move(c));
    }
  }
  for (const FalseFriendPair& p : config.false_friend_pairs) {
    for (std::size_t i = 0; i < p.shared_clusters; ++i) {
      ClusterSpec c;
      c.id = bench.clusters.size();
      c.kind = ClusterKind::kShared;
      c.owner_a = p.domain_a;
      c.owner_b = p.domain_b;
      bench.clusters.push_back(std::move(c));
    }
  }
  for (std::size_t i = 0; i < config.gap_clusters; ++i) {
    ClusterSpec c;
    c.id = bench.clusters.size();
    c.kind = ClusterKind::kGap;
    bench.clusters.push_back(std::move(c));
  }
  for (ClusterSpec& c : bench.clusters) {
    c.center.resize(config.input_dim);
    for (double& v : c.center) v = centers_rng.uniform(-1.0, 1.0);
  }

  for (std::size_t d = 0; d < config.num_domains; ++d) {
    DomainSpec spec;
    spec.domain_id = static_cast<int>(d);
    for (const ClusterSpec& c : bench.clusters) {
      if (c.kind == ClusterKind::kPrivate && c.owner_a == spec.domain_id) {
        spec.private_cluster_ids.push_back(c.id);
      } else if (c.kind == ClusterKind::kShared &&
                 (c.owner_a == spec.domain_id || c.owner_b == spec.domain_id)) {
        spec.shared_cluster_ids.push_back(c.id);
      }
    }
    bench.domains.push_back(std::move(spec));
  }

  // Features, owners and tags are drawn once, before any labeler exists, so
  // resampling label maps below never disturbs the data itself.
  double kappa = config.context_informativeness;
  auto draw_split = [&](std::size_t per_cluster) {
    std::vector<RawSample> out;
    out.reserve(per_cluster * bench.clusters.size());
    for (const ClusterSpec& c : bench.clusters) {
      for (std::size_t s = 0; s < per_cluster; ++s) {
        RawSample raw;
        raw.cluster_id = c.id;
        raw.features.resize(config.feature_dim());
        for (std::size_t j = 0; j < config.input_dim; ++j) {
          raw.features[j] = c.center[j] + config.cluster_sigma * samples_rng.gaussian();
        }
        switch (c.kind) {
          case ClusterKind::kPrivate:
            raw.owner = c.owner_a;
            raw.tag = CaseTag::kInDomain;
            break;
          case ClusterKind::kShared:
            raw.owner = samples_rng.uniform() < 0.5 ? c.owner_a : c.owner_b;
            raw.tag = CaseTag::kBoundary;
            break;
          case ClusterKind::kGap:
            raw.owner = kGapOwner;
            raw.tag = CaseTag::kGap;
            break;
        }
        Vec code = owner_context_code(raw.owner, config.num_domains, config.context_dims);
        for (std::size_t j = 0; j < config.context_dims; ++j) {
          raw.features[config.input_dim + j] = kappa * code[j] + (1.0 - kappa) * samples_rng.gaussian();
        }
        out.push_back(std::move(raw));
      }
    }
    return out;
  };
  std::vector<RawSample> raw_train = draw_split(config.samples_per_cluster.train);
  std::vector<RawSample> raw_val = draw_split(config.samples_per_cluster.val);
  std::vector<RawSample> raw_test = draw_split(config.samples_per_cluster.test);

  for (DomainSpec& d : bench.domains) {
    d.labeler = draw_labeler(config.classes, config.feature_dim(), labelers_rng);
  }
  bench.gap_labeler = draw_labeler(config.classes, config.feature_dim(), labelers_rng);

  // Resample label maps until every false-friend pair genuinely disagrees on
  // its shared ground, for both owners, in every split.
  std::vector<std::size_t> retries(config.false_friend_pairs.size(), 0);
  while (true) {
    bool all_ok = true;
    for (std::size_t pi = 0; pi < config.false_friend_pairs.size(); ++pi) {
      const FalseFriendPair& pair = config.false_friend_pairs[pi];
      const AffineLabeler& lab_a = bench.domains[pair.domain_a].labeler;
      const AffineLabeler& lab_b = bench.domains[pair.domain_b].labeler;
      bool ok = pair_divergence_ok(raw_train, bench, pair, lab_a, lab_b, config.min_divergence) &&
                pair_divergence_ok(raw_val, bench, pair, lab_a, lab_b, config.min_divergence) &&
                pair_divergence_ok(raw_test, bench, pair, lab_a, lab_b, config.min_divergence);
      if (ok) continue;
      all_ok = false;
      retries[pi] += 1;
      if (retries[pi] > kLabelerRetryBudget) {
        throw GenerationError("false-friend pair (" + std::to_string(pair.domain_a) + ", " +
                              std::to_string(pair.domain_b) + "): could not reach label divergence " +
                              fmt_double(config.min_divergence) + " after " +
                              std::to_string(kLabelerRetryBudget) + " label map resamples");
      }
      bench.domains[pair.domain_a].labeler =
          draw_labeler(config.classes, config.feature_dim(), labelers_rng);
      bench.domains[pair.domain_b].labeler =
          draw_labeler(config.classes, config.feature_dim(), labelers_rng);
    }
    if (all_ok) break;
  }

  auto finalize = [&](std::vector<RawSample>& raw, std::vector<LabeledExample>& out) {
    out.reserve(raw.size());
    for (RawSample& s : raw) {
      LabeledExample ex;
      ex.class_label = label_oracle(bench, s.features, s.owner);
      ex.features = std::move(s.features);
      ex.owner_domain = s.owner;
      ex.cluster_id = s.cluster_id;
      ex.case_tag = s.tag;
      out.push_back(std::move(ex));
    }
  };
  finalize(raw_train, bench.train);
  finalize(raw_val, bench.val);
  finalize(raw_test, bench.test);
  return bench;
}

std::vector<ContrastivePair> make_contrastive_pairs(const Benchmark& bench,
                                                    std::size_t pairs_per_relation,
                                                    std::uint64_t seed) {
  std::vector<std::size_t> by_domain_count(bench.config.num_domains, 0);
  std::vector<std::vector<std::size_t>> by_domain(bench.config.num_domains);
  std::map<std::pair<std::size_t, int>, std::vector<std::size_t>> by_cluster_owner;
  for (std::size_t i = 0; i < bench.train.size(); ++i) {
    const LabeledExample& ex = bench.train[i];
    if (ex.owner_domain != kGapOwner) {
      by_domain[ex.owner_domain].push_back(i);
      by_domain_count[ex.owner_domain] += 1;
    }
    if (ex.case_tag == CaseTag::kBoundary) {
      by_cluster_owner[{ex.cluster_id, ex.owner_domain}].push_back(i);
    }
  }
  for (std::size_t d = 0; d < by_domain.size(); ++d) {
    if (by_domain[d].size() < 2) {
      throw GenerationError("contrastive pairs: domain " + std::to_string(d) +
                            " has fewer than two training samples");
    }
  }

  Rng rng(seed);
  std::vector<ContrastivePair> pairs;
  pairs.reserve(2 * pairs_per_relation);
  for (std::size_t i = 0; i < pairs_per_relation; ++i) {
    std::size_t d = rng.index(bench.config.num_domains);
    const std::vector<std::size_t>& pool = by_domain[d];
    std::size_t a = rng.index(pool.size());
    std::size_t b = rng.index(pool.size() - 1);
    if (b >= a) b += 1;  // distinct second draw without rejection
    pairs.push_back({pool[a], pool[b], PairRelation::kSameDomain});
  }
  if (!bench.config.false_friend_pairs.empty()) {
    for (std::size_t i = 0; i < pairs_per_relation; ++i) {
      const FalseFriendPair& pair =
          bench.config.false_friend_pairs[rng.index(bench.config.false_friend_pairs.size())];
      std::vector<std::size_t> shared_ids;
      for (const ClusterSpec& c : bench.clusters) {
        if (c.kind == ClusterKind::kShared &&
            ((c.owner_a == pair.domain_a && c.owner_b == pair.domain_b) ||
             (c.owner_a == pair.domain_b && c.owner_b == pair.domain_a))) {
          shared_ids.push_back(c.id);
        }
      }
      std::size_t cid = shared_ids[rng.index(shared_ids.size())];
      auto ita = by_cluster_owner.find({cid, pair.domain_a});
      auto itb = by_cluster_owner.find({cid, pair.domain_b});
      if (ita == by_cluster_owner.end() || itb == by_cluster_owner.end()) {
        throw GenerationError("contrastive pairs: shared cluster " + std::to_string(cid) +
                              " lacks training samples for one owner");
      }
      std::size_t a = ita->second[rng.index(ita->second.size())];
      std::size_t b = itb->second[rng.index(itb->second.size())];
      pairs.push_back({a, b, PairRelation::kFalseFriend});
    }
  }
  return pairs;
}

namespace {

void append_labeler(std::string& out, const AffineLabeler& lab) {
  out += "map " + std::to_string(lab.map.rows) + " " + std::to_string(lab.map.cols) + "\n";
  for (std::size_t r = 0; r < lab.map.rows; ++r) {
    for (std::size_t c = 0; c < lab.map.cols; ++c) {
      if (c) out += ',';
      out += fmt_double(lab.map.at(r, c));
    }
    out += '\n';
  }
  out += "bias ";
  for (std::size_t i = 0; i < lab.bias.size(); ++i) {
    if (i) out += ',';
    out += fmt_double(lab.bias[i]);
  }
  out += '\n';
}

const char* cluster_kind_name(ClusterKind k) {
  switch (k) {
    case ClusterKind::kPrivate: return "private";
    case ClusterKind::kShared: return "shared";
    case ClusterKind::kGap: return "gap";
  }
  throw LookupError("unknown cluster kind");
}

ClusterKind cluster_kind_from(const std::string& s, const std::string& where) {
  if (s == "private") return ClusterKind::kPrivate;
  if (s == "shared") return ClusterKind::kShared;
  if (s == "gap") return ClusterKind::kGap;
  throw ParseError(where + ": unknown cluster kind '" + s + "'");
}

void append_split(std::string& out, const char* name, const std::vector<LabeledExample>& split) {
  out += "[split ";
  out += name;
  out += ' ';
  out += std::to_string(split.size());
  out += "]\n";
  for (const LabeledExample& ex : split) {
    for (double v : ex.features) {
      out += fmt_double(v);
      out += ',';
    }
    out += std::to_string(ex.class_label);
    out += ',';
    out += std::to_string(ex.owner_domain);
    out += ',';
    out += std::to_string(ex.cluster_id);
    out += ',';
    out += to_string(ex.case_tag);
    out += '\n';
  }
}

std::string serialize_benchmark(const Benchmark& bench) {
  const BenchmarkConfig& cfg = bench.config;
  std::string out;
  out.reserve(1 << 20);
  out += "moebound-benchmark v1\n";
  out += "[config]\n";
  out += "input_dim " + std::to_string(cfg.input_dim) + "\n";
  out += "num_domains " + std::to_string(cfg.num_domains) + "\n";
  out += "classes " + std::to_string(cfg.classes) + "\n";
  out += "private_clusters_per_domain " + std::to_string(cfg.private_clusters_per_domain) + "\n";
  out += "false_friend_pairs ";
  for (std::size_t i = 0; i < cfg.false_friend_pairs.size(); ++i) {
    const FalseFriendPair& p = cfg.false_friend_pairs[i];
    if (i) out += ',';
    out += std::to_string(p.domain_a) + ":" + std::to_string(p.domain_b) + ":" +
           std::to_string(p.shared_clusters);
  }
  out += '\n';
  out += "gap_clusters " + std::to_string(cfg.gap_clusters) + "\n";
  out += "cluster_sigma " + fmt_double(cfg.cluster_sigma) + "\n";
  out += "context_informativeness " + fmt_double(cfg.context_informativeness) + "\n";
  out += "context_dims " + std::to_string(cfg.context_dims) + "\n";
  out += "samples_per_cluster_train " + std::to_string(cfg.samples_per_cluster.train) + "\n";
  out += "samples_per_cluster_val " + std::to_string(cfg.samples_per_cluster.val) + "\n";
  out += "samples_per_cluster_test " + std::to_string(cfg.samples_per_cluster.test) + "\n";
  out += "min_divergence " + fmt_double(cfg.min_divergence) + "\n";
  out += "seed " + std::to_string(cfg.seed) + "\n";

  out += "[clusters " + std::to_string(bench.clusters.size()) + "]\n";
  for (const ClusterSpec& c : bench.clusters) {
    out += std::to_string(c.id);
    out += ',';
    out += cluster_kind_name(c.kind);
    out += ',';
    out += std::to_string(c.owner_a);
    out += ',';
    out += std::to_string(c.owner_b);
    for (double v : c.center) {
      out += ',';
      out += fmt_double(v);
    }
    out += '\n';
  }

  for (const DomainSpec& d : bench.domains) {
    out += "[domain " + std::to_string(d.domain_id) + "]\n";
    append_labeler(out, d.labeler);
    out += "private";
    for (std::size_t id : d.private_cluster_ids) out += " " + std::to_string(id);
    out += '\n';
    out += "shared";
    for (std::size_t id : d.shared_cluster_ids) out += " " + std::to_string(id);
    out += '\n';
  }
  out += "[gap_labeler]\n";
  append_labeler(out, bench.gap_labeler);

  append_split(out, "train", bench.train);
  append_split(out, "val", bench.val);
  append_split(out, "test", bench.test);
  out += "[end]\n";
  return out;
}

}  // namespace

std::uint64_t Benchmark::content_hash() const {
  return fnv1a_64(serialize_benchmark(*this));
}

void save_benchmark(const Benchmark& bench, const std::string& path) {
  write_text_file(path, serialize_benchmark(bench));
}

namespace {

AffineLabeler read_labeler(LineReader& reader, std::size_t classes, std::size_t feature_dim) {
  std::vector<std::string> head = split(trim(reader.expect_line()), ' ');
  if (head.size() != 3 || head[0] != "map") {
    throw ParseError(reader.where() + ": expected 'map <rows> <cols>'");
  }
  std::size_t rows = static_cast<std::size_t>(parse_int(head[1], reader.where()));
  std::size_t cols = static_cast<std::size_t>(parse_int(head[2], reader.where()));
  if (rows != classes || cols != feature_dim) {
    throw ParseError(reader.where() + ": labeler shape " + head[1] + "x" + head[2] +
                     " does not match config");
  }
  AffineLabeler lab;
  lab.map = Mat(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<std::string> cells = split(trim(reader.expect_line()), ',');
    if (cells.size() != cols) throw ParseError(reader.where() + ": expected " + head[2] + " cells");
    for (std::size_t c = 0; c < cols; ++c) {
      lab.map.at(r, c) = parse_double(cells[c], reader.where());
    }
  }
  std::string bias_line = trim(reader.expect_line());
  if (bias_line.rfind("bias ", 0) != 0) throw ParseError(reader.where() + ": expected 'bias ...'");
  std::vector<std::string> cells = split(bias_line.substr(5), ',');
  if (cells.size() != rows) throw ParseError(reader.where() + ": expected " + head[1] + " bias cells");
  lab.bias.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) lab.bias[i] = parse_double(cells[i], reader.where());
  return lab;
}

std::vector<std::size_t> read_id_list(const std::string& line, const std::string& prefix,
                                      const std::string& where) {
  if (line.rfind(prefix, 0) != 0) throw ParseError(where + ": expected '" + prefix + " ...'");
  std::vector<std::size_t> ids;
  std::string rest = trim(line.substr(prefix.size()));
  if (rest.empty()) return ids;
  for (const std::string& tok : split(rest, ' ')) {
    ids.push_back(static_cast<std::size_t>(parse_int(tok, where)));
  }
  return ids;
}

void read_split(LineReader& reader, const std::string& header, const char* name,
                std::size_t feature_dim, std::vector<LabeledExample>& out) {
  std::vector<std::string> head = split(trim(header), ' ');
  if (head.size() != 3 || head[0] != "[split" || head[1] != name) {
    throw ParseError(reader.where() + ": expected '[split " + std::string(name) + " <count>]'");
  }
  std::string count_tok = head[2];
  if (count_tok.empty() || count_tok.back() != ']') {
    throw ParseError(reader.where() + ": malformed split header");
  }
  count_tok.pop_back();
  std::size_t count = static_cast<std::size_t>(parse_int(count_tok, reader.where()));
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<std::string> cells = split(trim(reader.expect_line()), ',');
    if (cells.size() != feature_dim + 4) {
      throw ParseError(reader.where() + ": expected " + std::to_string(feature_dim + 4) +
                       " fields, got " + std::to_string(cells.size()));
    }
    LabeledExample ex;
    ex.features.resize(feature_dim);
    for (std::size_t j = 0; j < feature_dim; ++j) {
      ex.features[j] = parse_double(cells[j], reader.where());
    }
    ex.class_label = static_cast<std::size_t>(parse_int(cells[feature_dim], reader.where()));
    ex.owner_domain = static_cast<int>(parse_int(cells[feature_dim + 1], reader.where()));
    ex.cluster_id = static_cast<std::size_t>(parse_int(cells[feature_dim + 2], reader.where()));
    ex.case_tag = case_tag_from_string(cells[feature_dim + 3]);
    out.push_back(std::move(ex));
  }
}

}  // namespace

Benchmark load_benchmark(const std::string& path) {
  LineReader reader(path);
  if (trim(reader.expect_line()) != "moebound-benchmark v1") {
    throw ParseError(reader.where() + ": not a benchmark file (bad magic)");
  }
  if (trim(reader.expect_line()) != "[config]") {
    throw ParseError(reader.where() + ": expected [config]");
  }
  Benchmark bench;
  BenchmarkConfig& cfg = bench.config;
  auto read_kv = [&](const char* key) {
    std::string line = trim(reader.expect_line());
    std::size_t sp = line.find(' ');
    if (sp == std::string::npos || line.substr(0, sp) != key) {
      throw ParseError(reader.where() + ": expected '" + key + " <value>'");
    }
    return line.substr(sp + 1);
  };
  cfg.input_dim = static_cast<std::size_t>(parse_int(read_kv("input_dim"), reader.where()));
  cfg.num_domains = static_cast<std::size_t>(parse_int(read_kv("num_domains"), reader.where()));
  cfg.classes = static_cast<std::size_t>(parse_int(read_kv("classes"), reader.where()));
  cfg.private_clusters_per_domain =
      static_cast<std::size_t>(parse_int(read_kv("private_clusters_per_domain"), reader.where()));
  cfg.false_friend_pairs.clear();
  std::string pairs_line = read_kv("false_friend_pairs");
  if (!trim(pairs_line).empty()) {
    for (const std::string& tok : split(trim(pairs_line), ',')) {
      std::vector<std::string> f = split(tok, ':');
      if (f.size() != 3) throw ParseError(reader.where() + ": bad pair '" + tok + "'");
      FalseFriendPair p;
      p.domain_a = static_cast<int>(parse_int(f[0], reader.where()));
      p.domain_b = static_cast<int>(parse_int(f[1], reader.where()));
      p.shared_clusters = static_cast<std::size_t>(parse_int(f[2], reader.where()));
      cfg.false_friend_pairs.push_back(p);
    }
  }
  cfg.gap_clusters = static_cast<std::size_t>(parse_int(read_kv("gap_clusters"), reader.where()));
  cfg.cluster_sigma = parse_double(read_kv("cluster_sigma"), reader.where());
  cfg.context_informativeness =
      parse_double(read_kv("context_informativeness"), reader.where());
  cfg.context_dims = static_cast<std::size_t>(parse_int(read_kv("context_dims"), reader.where()));
  cfg.samples_per_cluster.train =
      static_cast<std::size_t>(parse_int(read_kv("samples_per_cluster_train"), reader.where()));
  cfg.samples_per_cluster.val =
      static_cast<std::size_t>(parse_int(read_kv("samples_per_cluster_val"), reader.where()));
  cfg.samples_per_cluster.test =
      static_cast<std::size_t>(parse_int(read_kv("samples_per_cluster_test"), reader.where()));
  cfg.min_divergence = parse_double(read_kv("min_divergence"), reader.where());
  cfg.seed = parse_u64(read_kv("seed"), reader.where());
  cfg.validate();

  std::string line = trim(reader.expect_line());
  std::vector<std::string> chead = split(line, ' ');
  if (chead.size() != 2 || chead[0] != "[clusters") {
    throw ParseError(reader.where() + ": expected [clusters <count>]");
  }
  std::string ccount = chead[1];
  if (ccount.empty() || ccount.back() != ']') throw ParseError(reader.where() + ": malformed header");
  ccount.pop_back();
  std::size_t n_clusters = static_cast<std::size_t>(parse_int(ccount, reader.where()));
  for (std::size_t i = 0; i < n_clusters; ++i) {
    std::vector<std::string> cells = split(trim(reader.expect_line()), ',');
    if (cells.size() != 4 + cfg.input_dim) {
      throw ParseError(reader.where() + ": expected " + std::to_string(4 + cfg.input_dim) +
                       " fields");
    }
    ClusterSpec c;
    c.id = static_cast<std::size_t>(parse_int(cells[0], reader.where()));
    c.kind = cluster_kind_from(cells[1], reader.where());
    c.owner_a = static_cast<int>(parse_int(cells[2], reader.where()));
    c.owner_b = static_cast<int>(parse_int(cells[3], reader.where()));
    c.center.resize(cfg.input_dim);
    for (std::size_t j = 0; j < cfg.input_dim; ++j) {
      c.center[j] = parse_double(cells[4 + j], reader.where());
    }
    bench.clusters.push_back(std::move(c));
  }

  for (std::size_t d = 0; d < cfg.num_domains; ++d) {
    std::string head = trim(reader.expect_line());
    if (head != "[domain " + std::to_string(d) + "]") {
      throw ParseError(reader.where() + ": expected [domain " + std::to_string(d) + "]");
    }
    DomainSpec spec;
    spec.domain_id = static_cast<int>(d);
    spec.labeler = read_labeler(reader, cfg.classes, cfg.feature_dim());
    spec.private_cluster_ids =
        read_id_list(trim(reader.expect_line()), "private", reader.where());
    spec.shared_cluster_ids = read_id_list(trim(reader.expect_line()), "shared", reader.where());
    bench.domains.push_back(std::move(spec));
  }
  if (trim(reader.expect_line()) != "[gap_labeler]") {
    throw ParseError(reader.where() + ": expected [gap_labeler]");
  }
  bench.gap_labeler = read_labeler(reader, cfg.classes, cfg.feature_dim());

  read_split(reader, reader.expect_line(), "train", cfg.feature_dim(), bench.train);
  read_split(reader, reader.expect_line(), "val", cfg.feature_dim(), bench.val);
  read_split(reader, reader.expect_line(), "test", cfg.feature_dim(), bench.test);
  if (trim(reader.expect_line()) != "[end]") {
    throw ParseError(reader.where() + ": expected [end]");
  }
  return bench;
}

}  // namespace moebound
