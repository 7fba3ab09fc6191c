#include "moebound/checkpoint.hpp"

#include <cmath>

#include "moebound/textio.hpp"

namespace moebound {

void save_array_store(const ArrayStore& store, const std::string& path) {
  std::string out = "moebound-arrays v1\n";
  for (const auto& [name, m] : store) {
    if (name.empty() || name.find(' ') != std::string::npos ||
        name.find('\n') != std::string::npos) {
      throw ParameterError("array store: invalid array name '" + name + "'");
    }
    if (m.values.size() != m.rows * m.cols) {
      throw DimensionError("array store: '" + name + "' storage mismatch");
    }
    out += "array " + name + " " + std::to_string(m.rows) + " " + std::to_string(m.cols) + "\n";
    for (std::size_t r = 0; r < m.rows; ++r) {
      for (std::size_t c = 0; c < m.cols; ++c) {
        if (c) out += ',';
        out += fmt_double(m.at(r, c));
      }
      out += '\n';
    }
  }
  out += "end\n";
  write_text_file(path, out);
}

ArrayStore load_array_store(const std::string& path) {
  LineReader reader(path);
  if (trim(reader.expect_line()) != "moebound-arrays v1") {
    throw ParseError(reader.where() + ": not an array store (bad magic)");
  }
  ArrayStore store;
  while (true) {
    std::string line = trim(reader.expect_line());
    if (line == "end") break;
    std::vector<std::string> head = split(line, ' ');
    if (head.size() != 4 || head[0] != "array") {
      throw ParseError(reader.where() + ": expected 'array <name> <rows> <cols>' or 'end'");
    }
    std::size_t rows = static_cast<std::size_t>(parse_int(head[2], reader.where()));
    std::size_t cols = static_cast<std::size_t>(parse_int(head[3], reader.where()));
    if (rows == 0 || cols == 0) throw ParseError(reader.where() + ": empty array");
    Mat m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<std::string> cells = split(trim(reader.expect_line()), ',');
      if (cells.size() != cols) {
        throw ParseError(reader.where() + ": expected " + head[3] + " cells, got " +
                         std::to_string(cells.size()));
      }
      for (std::size_t c = 0; c < cols; ++c) m.at(r, c) = parse_double(cells[c], reader.where());
    }
    if (!store.emplace(head[1], std::move(m)).second) {
      throw ParseError(reader.where() + ": duplicate array '" + head[1] + "'");
    }
  }
  return store;
}

namespace {

Mat vec_as_row(const Vec& v) {
  Mat m(1, v.size());
  m.values = v;
  return m;
}

Mat scalar_mat(double v) {
  Mat m(1, 1);
  m.values[0] = v;
  return m;
}

const Mat& need(const ArrayStore& store, const std::string& name) {
  auto it = store.find(name);
  if (it == store.end()) throw ParseError("checkpoint missing array '" + name + "'");
  return it->second;
}

double need_scalar(const ArrayStore& store, const std::string& name) {
  const Mat& m = need(store, name);
  if (m.rows != 1 || m.cols != 1) throw ParseError("checkpoint array '" + name + "' is not scalar");
  return m.values[0];
}

std::size_t need_index(const ArrayStore& store, const std::string& name) {
  double v = need_scalar(store, name);
  if (v < 0.0 || v != std::floor(v)) {
    throw ParseError("checkpoint array '" + name + "' is not a non-negative integer");
  }
  return static_cast<std::size_t>(v);
}

Vec need_row(const ArrayStore& store, const std::string& name) {
  const Mat& m = need(store, name);
  if (m.rows != 1) throw ParseError("checkpoint array '" + name + "' is not a row vector");
  return m.values;
}

void pack_mlp(ArrayStore& store, const std::string& prefix, const MlpParams& p) {
  for (std::size_t l = 0; l < p.num_layers(); ++l) {
    store[prefix + ".w" + std::to_string(l)] = p.weights[l];
    store[prefix + ".b" + std::to_string(l)] = vec_as_row(p.biases[l]);
  }
  if (p.mix_streams > 0) {
    store[prefix + ".mix"] = p.mix;
    store[prefix + ".mix_streams"] = scalar_mat(static_cast<double>(p.mix_streams));
  }
}

MlpParams unpack_mlp(const ArrayStore& store, const std::string& prefix) {
  MlpParams p;
  for (std::size_t l = 0;; ++l) {
    auto it = store.find(prefix + ".w" + std::to_string(l));
    if (it == store.end()) break;
    p.weights.push_back(it->second);
    p.biases.push_back(need_row(store, prefix + ".b" + std::to_string(l)));
  }
  if (p.weights.empty()) throw ParseError("checkpoint missing array '" + prefix + ".w0'");
  if (store.count(prefix + ".mix")) {
    p.mix = need(store, prefix + ".mix");
    p.mix_streams = need_index(store, prefix + ".mix_streams");
  }
  p.validate();
  return p;
}

}  // namespace

void save_model_bundle(const ModelBundle& bundle, const std::string& path) {
  ArrayStore store;
  store["bundle.num_experts"] = scalar_mat(static_cast<double>(bundle.experts.size()));
  for (std::size_t i = 0; i < bundle.experts.size(); ++i) {
    std::string prefix = "expert" + std::to_string(i);
    store[prefix + ".domain"] = scalar_mat(static_cast<double>(bundle.experts[i].domain_id));
    pack_mlp(store, prefix, bundle.experts[i].net);
  }
  pack_mlp(store, "embed", bundle.embed_net);
  for (std::size_t i = 0; i < bundle.stats.size(); ++i) {
    std::string prefix = "stats" + std::to_string(i);
    store[prefix + ".centroid"] = vec_as_row(bundle.stats[i].centroid);
    store[prefix + ".variance"] = vec_as_row(bundle.stats[i].variance);
    store[prefix + ".count"] = scalar_mat(static_cast<double>(bundle.stats[i].sample_count));
  }
  pack_mlp(store, "router", bundle.router.gate_net);
  const RouterSettings& s = bundle.router.settings;
  store["router.settings"] = vec_as_row({static_cast<double>(s.top_k), s.tau,
                                         s.lambda_load_balance, s.lambda_boundary,
                                         s.lambda_coverage, s.kernel_sigma});
  if (bundle.meta.has_value()) {
    pack_mlp(store, "meta", bundle.meta->net);
    store["meta.input_mode"] =
        scalar_mat(static_cast<double>(static_cast<int>(bundle.meta->input_mode)));
  }
  store["cal.mode"] = scalar_mat(static_cast<double>(static_cast<int>(bundle.calibration_mode)));
  store["cal.temperature"] = scalar_mat(bundle.temperature);
  store["cal.adaptive"] = vec_as_row({bundle.adaptive.a, bundle.adaptive.b});
  save_array_store(store, path);
}

ModelBundle load_model_bundle(const std::string& path) {
  ArrayStore store = load_array_store(path);
  ModelBundle bundle;
  std::size_t n = need_index(store, "bundle.num_experts");
  for (std::size_t i = 0; i < n; ++i) {
    std::string prefix = "expert" + std::to_string(i);
    ExpertModel expert;
    expert.domain_id = static_cast<int>(need_scalar(store, prefix + ".domain"));
    expert.net = unpack_mlp(store, prefix);
    bundle.experts.push_back(std::move(expert));
  }
  bundle.embed_net = unpack_mlp(store, "embed");
  for (std::size_t i = 0; i < n; ++i) {
    std::string prefix = "stats" + std::to_string(i);
    ExpertStats stats;
    stats.centroid = need_row(store, prefix + ".centroid");
    stats.variance = need_row(store, prefix + ".variance");
    stats.sample_count = need_index(store, prefix + ".count");
    bundle.stats.push_back(std::move(stats));
  }
  bundle.router.gate_net = unpack_mlp(store, "router");
  Vec rs = need_row(store, "router.settings");
  if (rs.size() != 6) throw ParseError("checkpoint array 'router.settings' has wrong length");
  bundle.router.settings.top_k = static_cast<std::size_t>(rs[0]);
  bundle.router.settings.tau = rs[1];
  bundle.router.settings.lambda_load_balance = rs[2];
  bundle.router.settings.lambda_boundary = rs[3];
  bundle.router.settings.lambda_coverage = rs[4];
  bundle.router.settings.kernel_sigma = rs[5];
  if (store.count("meta.w0")) {
    MetaExpertModel meta;
    meta.net = unpack_mlp(store, "meta");
    std::size_t mode = need_index(store, "meta.input_mode");
    if (mode > 2) throw ParseError("checkpoint array 'meta.input_mode' out of range");
    meta.input_mode = static_cast<MetaInputMode>(mode);
    bundle.meta = std::move(meta);
  }
  std::size_t cal_mode = need_index(store, "cal.mode");
  if (cal_mode > 2) throw ParseError("checkpoint array 'cal.mode' out of range");
  bundle.calibration_mode = static_cast<CalibrationMode>(cal_mode);
  bundle.temperature = need_scalar(store, "cal.temperature");
  Vec ad = need_row(store, "cal.adaptive");
  if (ad.size() != 2) throw ParseError("checkpoint array 'cal.adaptive' has wrong length");
  bundle.adaptive = {ad[0], ad[1]};
  return bundle;
}

}  // namespace moebound
