#include "moebound/config.hpp"

#include <functional>
#include <map>
#include <sstream>

#include "moebound/textio.hpp"

namespace moebound {

void ExperimentConfig::validate() const {
  benchmark.validate();
  auto fail = [](const std::string& msg) { throw ConfigError("experiment config: " + msg); };
  if (embedding_dim == 0 || embed_hidden_dim == 0) fail("embedding dims must be positive");
  if (contrastive_pairs_per_relation == 0) fail("contrastive_pairs_per_relation must be positive");
  if (expert_train.hidden_dim == 0) fail("expert.hidden_dim must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("detection.gamma must lie in [0, 1]");
  if (!(thresholds.theta_ood > 0.0)) fail("detection.theta_ood must be positive");
  if (thresholds.theta_jsd < 0.0) fail("detection.theta_jsd must be non-negative");
  if (router.top_k == 0 || router.top_k > benchmark.num_domains) {
    fail("router.top_k must lie in [1, num_domains]");
  }
  if (!(router.tau >= 0.0 && router.tau <= 1.0)) fail("router.tau must lie in [0, 1]");
  if (!(router.kernel_sigma > 0.0)) fail("router.kernel_sigma must be positive");
  if (router.lambda_load_balance < 0.0 || router.lambda_boundary < 0.0 ||
      router.lambda_coverage < 0.0) {
    fail("router loss weights must be non-negative");
  }
  if (finetune.lambda_flat < 0.0) fail("finetune.lambda_flat must be non-negative");
  if (ece_bins == 0) fail("calibration.ece_bins must be positive");
  if (mix_streams_on) {
    if (mix_streams < 2) fail("mix_streams must be at least 2 when mixing is on");
    if (expert_train.hidden_dim % mix_streams != 0) {
      fail("expert.hidden_dim must be divisible by mix_streams");
    }
  }
}

namespace {

std::string bool_str(bool b) { return b ? "true" : "false"; }

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

std::size_t parse_size(const std::string& v, const std::string& key) {
  long long n = parse_int(v, "key '" + key + "'");
  if (n < 0) throw ConfigError("key '" + key + "': must be non-negative");
  return static_cast<std::size_t>(n);
}

std::vector<FalseFriendPair> parse_pairs(const std::string& v, const std::string& key) {
  std::vector<FalseFriendPair> pairs;
  if (trim(v) == "none") return pairs;
  for (const std::string& tok : split(trim(v), ',')) {
    std::vector<std::string> f = split(tok, ':');
    if (f.size() != 3) {
      throw ConfigError("key '" + key + "': pair must be a:b:shared_clusters, got '" + tok + "'");
    }
    FalseFriendPair p;
    p.domain_a = static_cast<int>(parse_int(f[0], "key '" + key + "'"));
    p.domain_b = static_cast<int>(parse_int(f[1], "key '" + key + "'"));
    p.shared_clusters = parse_size(f[2], key);
    pairs.push_back(p);
  }
  return pairs;
}

std::string pairs_str(const std::vector<FalseFriendPair>& pairs) {
  if (pairs.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(pairs[i].domain_a) + ":" + std::to_string(pairs[i].domain_b) + ":" +
           std::to_string(pairs[i].shared_clusters);
  }
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& key_table() {
  static const std::map<std::string, Setter> table = {
      {"benchmark.input_dim",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.benchmark.input_dim = parse_size(v, k);
       }},
      {"benchmark.num_domains",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.benchmark.num_domains = parse_size(v, k);
       }},
      {"benchmark.classes",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.benchmark.classes = parse_size(v, k);
       }},
      {"benchmark.private_clusters_per_domain",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.benchmark.private_clusters_per_domain = parse_size(v, k);
       }},
      {"benchmark.false_friend_pairs",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.benchmark.false_friend_pairs = parse_pairs(v, k);
       }},
      {"benchmark.gap_clusters",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.benchmark.gap_clusters = parse_size(v, k);
       }},
      {"benchmark.cluster_sigma",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.benchmark.cluster_sigma = parse_double(v, "key '" + k + "'");
       }},
      {"benchmark.context_informativeness",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.benchmark.context_informativeness = parse_double(v, "key '" + k + "'");
       }},
      {"benchmark.context_dims",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.benchmark.context_dims = parse_size(v, k);
       }},
      {"benchmark.samples_per_cluster_train",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.benchmark.samples_per_cluster.train = parse_size(v, k);
       }},
      {"benchmark.samples_per_cluster_val",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.benchmark.samples_per_cluster.val = parse_size(v, k);
       }},
      {"benchmark.samples_per_cluster_test",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.benchmark.samples_per_cluster.test = parse_size(v, k);
       }},
      {"benchmark.min_divergence",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.benchmark.min_divergence = parse_double(v, "key '" + k + "'");
       }},
      {"benchmark.seed",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.benchmark.seed = parse_u64(v, "key '" + k + "'");
       }},
      {"multi_expert_on",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.multi_expert_on = parse_bool(v, k);
       }},
      {"boundary_losses_on",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.boundary_losses_on = parse_bool(v, k);
       }},
      {"contrastive_on",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.contrastive_on = parse_bool(v, k);
       }},
      {"boundary_finetune_on",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.boundary_finetune_on = parse_bool(v, k);
       }},
      {"meta_expert_on",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.meta_expert_on = parse_bool(v, k);
       }},
      {"mix_streams_on",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.mix_streams_on = parse_bool(v, k);
       }},
      {"embed_hidden_dim",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.embed_hidden_dim = parse_size(v, k);
       }},
      {"embedding_dim",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.embedding_dim = parse_size(v, k);
       }},
      {"contrastive_pairs_per_relation",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.contrastive_pairs_per_relation = parse_size(v, k);
       }},
      {"expert.hidden_dim",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.expert_train.hidden_dim = parse_size(v, k);
       }},
      {"expert.epochs",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.expert_train.epochs = parse_size(v, k);
       }},
      {"expert.learning_rate",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.expert_train.learning_rate = parse_double(v, "key '" + k + "'");
       }},
      {"expert.batch_size",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.expert_train.batch_size = parse_size(v, k);
       }},
      {"contrastive.margin",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.contrastive.margin = parse_double(v, "key '" + k + "'");
       }},
      {"contrastive.epochs",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.contrastive.epochs = parse_size(v, k);
       }},
      {"contrastive.learning_rate",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.contrastive.learning_rate = parse_double(v, "key '" + k + "'");
       }},
      {"contrastive.batch_size",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.contrastive.batch_size = parse_size(v, k);
       }},
      {"router.top_k",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.router.top_k = parse_size(v, k);
       }},
      {"router.tau",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.router.tau = parse_double(v, "key '" + k + "'");
       }},
      {"router.lambda_load_balance",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.router.lambda_load_balance = parse_double(v, "key '" + k + "'");
       }},
      {"router.lambda_boundary",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.router.lambda_boundary = parse_double(v, "key '" + k + "'");
       }},
      {"router.lambda_coverage",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.router.lambda_coverage = parse_double(v, "key '" + k + "'");
       }},
      {"router.kernel_sigma",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.router.kernel_sigma = parse_double(v, "key '" + k + "'");
       }},
      {"router.gate_hidden_dim",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.router_train.gate_hidden_dim = parse_size(v, k);
       }},
      {"router.epochs",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.router_train.epochs = parse_size(v, k);
       }},
      {"router.learning_rate",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.router_train.learning_rate = parse_double(v, "key '" + k + "'");
       }},
      {"router.batch_size",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.router_train.batch_size = parse_size(v, k);
       }},
      {"meta.hidden_dim",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.meta_train.hidden_dim = parse_size(v, k);
       }},
      {"meta.epochs",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.meta_train.epochs = parse_size(v, k);
       }},
      {"meta.learning_rate",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.meta_train.learning_rate = parse_double(v, "key '" + k + "'");
       }},
      {"meta.batch_size",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.meta_train.batch_size = parse_size(v, k);
       }},
      {"meta.input_mode",
       [](ExperimentConfig& c, const std::string& v, const std::string&) {
         c.meta_input_mode = meta_input_mode_from_string(v);
       }},
      {"finetune.lambda_flat",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.finetune.lambda_flat = parse_double(v, "key '" + k + "'");
       }},
      {"finetune.epochs",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.finetune.epochs = parse_size(v, k);
       }},
      {"finetune.learning_rate",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.finetune.learning_rate = parse_double(v, "key '" + k + "'");
       }},
      {"finetune.batch_size",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.finetune.batch_size = parse_size(v, k);
       }},
      {"finetune_before_temperature",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.finetune_before_temperature = parse_bool(v, k);
       }},
      {"calibration.mode",
       [](ExperimentConfig& c, const std::string& v, const std::string&) {
         c.calibration_mode = calibration_mode_from_string(v);
       }},
      {"calibration.ece_bins",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.ece_bins = parse_size(v, k);
       }},
      {"detection.gamma",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.gamma = parse_double(v, "key '" + k + "'");
       }},
      {"detection.theta_ood",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.thresholds.theta_ood = parse_double(v, "key '" + k + "'");
       }},
      {"detection.theta_jsd",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.thresholds.theta_jsd = parse_double(v, "key '" + k + "'");
       }},
      {"policy.in_coverage",
       [](ExperimentConfig& c, const std::string& v, const std::string&) {
         c.policy.in_coverage = response_action_from_string(v);
       }},
      {"policy.boundary_violation",
       [](ExperimentConfig& c, const std::string& v, const std::string&) {
         c.policy.boundary_violation = response_action_from_string(v);
       }},
      {"policy.coverage_gap",
       [](ExperimentConfig& c, const std::string& v, const std::string&) {
         c.policy.coverage_gap = response_action_from_string(v);
       }},
      {"mix_streams",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.mix_streams = parse_size(v, k);
       }},
      {"seed",
       [](ExperimentConfig& c, const std::string& v, const std::string& k) {
         c.seed = parse_u64(v, "key '" + k + "'");
       }},
  };
  return table;
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& name) {
  ExperimentConfig config;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    line_no += 1;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    std::size_t sp = line.find(' ');
    std::string where = name + ":" + std::to_string(line_no);
    if (sp == std::string::npos) {
      throw ConfigError(where + ": key '" + line + "' is missing a value");
    }
    std::string key = line.substr(0, sp);
    std::string value = trim(line.substr(sp + 1));
    if (value.empty()) {
      throw ConfigError(where + ": key '" + key + "' is missing a value");
    }
    auto it = key_table().find(key);
    if (it == key_table().end()) {
      throw ConfigError(where + ": unknown config key '" + key + "'");
    }
    it->second(config, value, key);
  }
  config.validate();
  return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config(read_text_file(path), path);
}

std::string serialize_experiment_config(const ExperimentConfig& c) {
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) { out += k + " " + v + "\n"; };
  kv("benchmark.input_dim", std::to_string(c.benchmark.input_dim));
  kv("benchmark.num_domains", std::to_string(c.benchmark.num_domains));
  kv("benchmark.classes", std::to_string(c.benchmark.classes));
  kv("benchmark.private_clusters_per_domain",
     std::to_string(c.benchmark.private_clusters_per_domain));
  kv("benchmark.false_friend_pairs", pairs_str(c.benchmark.false_friend_pairs));
  kv("benchmark.gap_clusters", std::to_string(c.benchmark.gap_clusters));
  kv("benchmark.cluster_sigma", fmt_double(c.benchmark.cluster_sigma));
  kv("benchmark.context_informativeness", fmt_double(c.benchmark.context_informativeness));
  kv("benchmark.context_dims", std::to_string(c.benchmark.context_dims));
  kv("benchmark.samples_per_cluster_train", std::to_string(c.benchmark.samples_per_cluster.train));
  kv("benchmark.samples_per_cluster_val", std::to_string(c.benchmark.samples_per_cluster.val));
  kv("benchmark.samples_per_cluster_test", std::to_string(c.benchmark.samples_per_cluster.test));
  kv("benchmark.min_divergence", fmt_double(c.benchmark.min_divergence));
  kv("benchmark.seed", std::to_string(c.benchmark.seed));
  kv("multi_expert_on", bool_str(c.multi_expert_on));
  kv("boundary_losses_on", bool_str(c.boundary_losses_on));
  kv("contrastive_on", bool_str(c.contrastive_on));
  kv("boundary_finetune_on", bool_str(c.boundary_finetune_on));
  kv("meta_expert_on", bool_str(c.meta_expert_on));
  kv("mix_streams_on", bool_str(c.mix_streams_on));
  kv("embed_hidden_dim", std::to_string(c.embed_hidden_dim));
  kv("embedding_dim", std::to_string(c.embedding_dim));
  kv("contrastive_pairs_per_relation", std::to_string(c.contrastive_pairs_per_relation));
  kv("expert.hidden_dim", std::to_string(c.expert_train.hidden_dim));
  kv("expert.epochs", std::to_string(c.expert_train.epochs));
  kv("expert.learning_rate", fmt_double(c.expert_train.learning_rate));
  kv("expert.batch_size", std::to_string(c.expert_train.batch_size));
  kv("contrastive.margin", fmt_double(c.contrastive.margin));
  kv("contrastive.epochs", std::to_string(c.contrastive.epochs));
  kv("contrastive.learning_rate", fmt_double(c.contrastive.learning_rate));
  kv("contrastive.batch_size", std::to_string(c.contrastive.batch_size));
  kv("router.top_k", std::to_string(c.router.top_k));
  kv("router.tau", fmt_double(c.router.tau));
  kv("router.lambda_load_balance", fmt_double(c.router.lambda_load_balance));
  kv("router.lambda_boundary", fmt_double(c.router.lambda_boundary));
  kv("router.lambda_coverage", fmt_double(c.router.lambda_coverage));
  kv("router.kernel_sigma", fmt_double(c.router.kernel_sigma));
  kv("router.gate_hidden_dim", std::to_string(c.router_train.gate_hidden_dim));
  kv("router.epochs", std::to_string(c.router_train.epochs));
  kv("router.learning_rate", fmt_double(c.router_train.learning_rate));
  kv("router.batch_size", std::to_string(c.router_train.batch_size));
  kv("meta.hidden_dim", std::to_string(c.meta_train.hidden_dim));
  kv("meta.epochs", std::to_string(c.meta_train.epochs));
  kv("meta.learning_rate", fmt_double(c.meta_train.learning_rate));
  kv("meta.batch_size", std::to_string(c.meta_train.batch_size));
  kv("meta.input_mode", to_string(c.meta_input_mode));
  kv("finetune.lambda_flat", fmt_double(c.finetune.lambda_flat));
  kv("finetune.epochs", std::to_string(c.finetune.epochs));
  kv("finetune.learning_rate", fmt_double(c.finetune.learning_rate));
  kv("finetune.batch_size", std::to_string(c.finetune.batch_size));
  kv("finetune_before_temperature", bool_str(c.finetune_before_temperature));
  kv("calibration.mode", to_string(c.calibration_mode));
  kv("calibration.ece_bins", std::to_string(c.ece_bins));
  kv("detection.gamma", fmt_double(c.gamma));
  kv("detection.theta_ood", fmt_double(c.thresholds.theta_ood));
  kv("detection.theta_jsd", fmt_double(c.thresholds.theta_jsd));
  kv("policy.in_coverage", to_string(*c.policy.in_coverage));
  kv("policy.boundary_violation", to_string(*c.policy.boundary_violation));
  kv("policy.coverage_gap", to_string(*c.policy.coverage_gap));
  kv("mix_streams", std::to_string(c.mix_streams));
  kv("seed", std::to_string(c.seed));
  return out;
}

std::string experiment_config_hash(const ExperimentConfig& config) {
  return hash_hex(fnv1a_64(serialize_experiment_config(config)));
}

}  // namespace moebound
