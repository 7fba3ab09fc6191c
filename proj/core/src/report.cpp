#include "moebound/report.hpp"

#include <json.hpp>

#include "moebound/textio.hpp"

namespace moebound {

namespace {

std::string json_escape(const std::string& s) {
  std::string out;
  out.reserve(s.size() + 2);
  for (char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  return out;
}

// Minimal emitter with a frozen field order, so equal reports serialize to
// identical bytes. The parser side uses a real JSON library; only emission
// needs to be canonical.
class JsonWriter {
 public:
  std::string str() && { return std::move(out_); }

  void key(const std::string& k) {
    comma();
    out_ += '"' + json_escape(k) + "\":";
    pending_value_ = true;
  }
  void value_str(const std::string& v) { scalar('"' + json_escape(v) + '"'); }
  void value_num(double v) { scalar(fmt_double(v)); }
  void value_int(long long v) { scalar(std::to_string(v)); }
  void value_uint(std::uint64_t v) { scalar(std::to_string(v)); }
  void value_bool(bool v) { scalar(v ? "true" : "false"); }
  void value_null() { scalar("null"); }
  void begin_obj() { open('{'); }
  void end_obj() { close('}'); }
  void begin_arr() { open('['); }
  void end_arr() { close(']'); }

 private:
  void comma() {
    if (need_comma_) out_ += ',';
    need_comma_ = false;
  }
  void scalar(const std::string& text) {
    comma();
    out_ += text;
    need_comma_ = true;
    pending_value_ = false;
  }
  void open(char c) {
    comma();
    out_ += c;
    need_comma_ = false;
    pending_value_ = false;
  }
  void close(char c) {
    out_ += c;
    need_comma_ = true;
  }

  std::string out_;
  bool need_comma_ = false;
  bool pending_value_ = false;
};

void emit_tag_stats(JsonWriter& w, const char* name, const TagStats& t) {
  w.key(name);
  w.begin_obj();
  w.key("count");
  w.value_uint(t.count);
  w.key("mean_confidence");
  w.value_num(t.mean_confidence);
  w.key("accuracy");
  w.value_num(t.accuracy);
  w.key("dissociation");
  w.value_num(t.dissociation);
  w.end_obj();
}

}  // namespace

std::string metrics_report_to_json(const MetricsReport& r) {
  JsonWriter w;
  w.begin_obj();

  w.key("run");
  w.begin_obj();
  w.key("config_hash");
  w.value_str(r.config_hash);
  w.key("benchmark_hash");
  w.value_str(r.benchmark_hash);
  w.key("seed");
  w.value_uint(r.seed);
  w.key("test_count");
  w.value_uint(r.test_count);
  w.key("stages");
  w.begin_arr();
  for (const std::string& s : r.stages_run) w.value_str(s);
  w.end_arr();
  w.end_obj();

  w.key("detectors");
  w.begin_arr();
  for (const DetectorRow& d : r.detectors) {
    w.begin_obj();
    w.key("name");
    w.value_str(d.name);
    w.key("available");
    w.value_bool(d.available);
    if (d.available) {
      w.key("auroc");
      w.value_num(d.auroc_all);
      w.key("pr_auc");
      w.value_num(d.pr_auc_all);
      w.key("auroc_boundary");
      w.value_num(d.auroc_boundary);
      w.key("auroc_gap");
      w.value_num(d.auroc_gap);
    }
    w.end_obj();
  }
  w.end_arr();

  w.key("risk_coverage");
  w.begin_obj();
  w.key("signal");
  w.value_str(r.risk_coverage_signal);
  w.key("points");
  w.begin_arr();
  for (const RiskCoveragePoint& p : r.risk_coverage) {
    w.begin_arr();
    w.value_num(p.threshold);
    w.value_num(p.coverage);
    w.value_num(p.precision);
    w.end_arr();
  }
  w.end_arr();
  w.end_obj();

  w.key("phenotype");
  w.begin_obj();
  emit_tag_stats(w, "in_domain", r.phenotype.in_domain);
  emit_tag_stats(w, "boundary", r.phenotype.boundary);
  emit_tag_stats(w, "gap", r.phenotype.gap);
  w.key("boundary_localization_ratio");
  if (r.phenotype.localization_infinite) {
    w.value_str("inf");
  } else if (r.phenotype.boundary_localization_ratio.has_value()) {
    w.value_num(*r.phenotype.boundary_localization_ratio);
  } else {
    w.value_null();
  }
  w.key("ece");
  w.value_num(r.phenotype.ece);
  w.end_obj();

  w.key("pair_phenotype");
  w.begin_arr();
  for (const PairPhenotypeRow& p : r.pair_phenotype) {
    w.begin_obj();
    w.key("expert");
    w.value_int(p.expert_domain);
    w.key("owner");
    w.value_int(p.owner_domain);
    w.key("count");
    w.value_uint(p.count);
    w.key("mean_confidence");
    w.value_num(p.mean_confidence);
    w.key("accuracy");
    w.value_num(p.accuracy);
    w.end_obj();
  }
  w.end_arr();

  w.key("entropy_distance_spearman");
  w.value_num(r.entropy_distance_spearman);
  w.key("in_domain_test_accuracy");
  w.value_num(r.in_domain_test_accuracy);

  w.key("pre_finetune");
  if (r.pre_finetune.has_value()) {
    w.begin_obj();
    w.key("entropy_distance_spearman");
    w.value_num(r.pre_finetune->entropy_distance_spearman);
    w.key("in_domain_test_accuracy");
    w.value_num(r.pre_finetune->in_domain_test_accuracy);
    w.end_obj();
  } else {
    w.value_null();
  }

  w.key("calibration");
  w.begin_obj();
  w.key("mode");
  w.value_str(r.calibration.mode);
  w.key("temperature");
  w.value_num(r.calibration.temperature);
  w.key("adaptive_a");
  w.value_num(r.calibration.adaptive_a);
  w.key("adaptive_b");
  w.value_num(r.calibration.adaptive_b);
  w.key("test_ece");
  w.value_num(r.calibration.test_ece);
  w.end_obj();

  w.key("monitoring");
  w.begin_obj();
  w.key("signals");
  w.begin_arr();
  for (const SignalSummary& s : r.monitoring.signals) {
    w.begin_obj();
    w.key("name");
    w.value_str(s.name);
    w.key("count");
    w.value_uint(s.count);
    w.key("mean");
    w.value_num(s.mean);
    w.key("min");
    w.value_num(s.min);
    w.key("max");
    w.value_num(s.max);
    w.end_obj();
  }
  w.end_arr();
  w.key("verdicts");
  w.begin_obj();
  for (const auto& [k, v] : r.monitoring.verdict_counts) {
    w.key(k);
    w.value_uint(v);
  }
  w.end_obj();
  w.key("actions");
  w.begin_obj();
  for (const auto& [k, v] : r.monitoring.action_counts) {
    w.key(k);
    w.value_uint(v);
  }
  w.end_obj();
  w.end_obj();

  w.end_obj();
  std::string text = std::move(w).str();
  text += '\n';
  return text;
}

namespace {

using nlohmann::json;

TagStats tag_stats_from(const json& j) {
  TagStats t;
  t.count = j.at("count").get<std::size_t>();
  t.mean_confidence = j.at("mean_confidence").get<double>();
  t.accuracy = j.at("accuracy").get<double>();
  t.dissociation = j.at("dissociation").get<double>();
  return t;
}

}  // namespace

MetricsReport metrics_report_from_json(const std::string& text, const std::string& name) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(name + ": invalid JSON: " + e.what());
  }
  try {
    MetricsReport r;
    const json& run = j.at("run");
    r.config_hash = run.at("config_hash").get<std::string>();
    r.benchmark_hash = run.at("benchmark_hash").get<std::string>();
    r.seed = run.at("seed").get<std::uint64_t>();
    r.test_count = run.at("test_count").get<std::size_t>();
    for (const json& s : run.at("stages")) r.stages_run.push_back(s.get<std::string>());

    for (const json& d : j.at("detectors")) {
      DetectorRow row;
      row.name = d.at("name").get<std::string>();
      row.available = d.at("available").get<bool>();
      if (row.available) {
        row.auroc_all = d.at("auroc").get<double>();
        row.pr_auc_all = d.at("pr_auc").get<double>();
        row.auroc_boundary = d.at("auroc_boundary").get<double>();
        row.auroc_gap = d.at("auroc_gap").get<double>();
      }
      r.detectors.push_back(row);
    }

    const json& rc = j.at("risk_coverage");
    r.risk_coverage_signal = rc.at("signal").get<std::string>();
    for (const json& p : rc.at("points")) {
      RiskCoveragePoint pt;
      pt.threshold = p.at(0).get<double>();
      pt.coverage = p.at(1).get<double>();
      pt.precision = p.at(2).get<double>();
      r.risk_coverage.push_back(pt);
    }

    const json& ph = j.at("phenotype");
    r.phenotype.in_domain = tag_stats_from(ph.at("in_domain"));
    r.phenotype.boundary = tag_stats_from(ph.at("boundary"));
    r.phenotype.gap = tag_stats_from(ph.at("gap"));
    const json& blr = ph.at("boundary_localization_ratio");
    if (blr.is_string()) {
      if (blr.get<std::string>() != "inf") {
        throw ParseError(name + ": bad boundary_localization_ratio marker");
      }
      r.phenotype.localization_infinite = true;
    } else if (blr.is_number()) {
      r.phenotype.boundary_localization_ratio = blr.get<double>();
    }
    r.phenotype.ece = ph.at("ece").get<double>();

    for (const json& p : j.at("pair_phenotype")) {
      PairPhenotypeRow row;
      row.expert_domain = p.at("expert").get<int>();
      row.owner_domain = p.at("owner").get<int>();
      row.count = p.at("count").get<std::size_t>();
      row.mean_confidence = p.at("mean_confidence").get<double>();
      row.accuracy = p.at("accuracy").get<double>();
      r.pair_phenotype.push_back(row);
    }

    r.entropy_distance_spearman = j.at("entropy_distance_spearman").get<double>();
    r.in_domain_test_accuracy = j.at("in_domain_test_accuracy").get<double>();

    const json& pf = j.at("pre_finetune");
    if (!pf.is_null()) {
      PreFinetuneSnapshot snap;
      snap.entropy_distance_spearman = pf.at("entropy_distance_spearman").get<double>();
      snap.in_domain_test_accuracy = pf.at("in_domain_test_accuracy").get<double>();
      r.pre_finetune = snap;
    }

    const json& cal = j.at("calibration");
    r.calibration.mode = cal.at("mode").get<std::string>();
    r.calibration.temperature = cal.at("temperature").get<double>();
    r.calibration.adaptive_a = cal.at("adaptive_a").get<double>();
    r.calibration.adaptive_b = cal.at("adaptive_b").get<double>();
    r.calibration.test_ece = cal.at("test_ece").get<double>();

    const json& mon = j.at("monitoring");
    for (const json& s : mon.at("signals")) {
      SignalSummary sum;
      sum.name = s.at("name").get<std::string>();
      sum.count = s.at("count").get<std::size_t>();
      sum.mean = s.at("mean").get<double>();
      sum.min = s.at("min").get<double>();
      sum.max = s.at("max").get<double>();
      r.monitoring.signals.push_back(sum);
    }
    for (const auto& [k, v] : mon.at("verdicts").items()) {
      r.monitoring.verdict_counts[k] = v.get<std::size_t>();
    }
    for (const auto& [k, v] : mon.at("actions").items()) {
      r.monitoring.action_counts[k] = v.get<std::size_t>();
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError(name + ": report missing or malformed field: " + e.what());
  }
}

void save_metrics_report(const MetricsReport& report, const std::string& path) {
  write_text_file(path, metrics_report_to_json(report));
}

MetricsReport load_metrics_report(const std::string& path) {
  return metrics_report_from_json(read_text_file(path), path);
}

std::map<std::string, std::string> metrics_report_to_csv(const MetricsReport& r) {
  std::map<std::string, std::string> files;

  std::string det = "name,available,auroc,pr_auc,auroc_boundary,auroc_gap\n";
  for (const DetectorRow& d : r.detectors) {
    det += d.name;
    det += d.available ? ",true," : ",false,";
    if (d.available) {
      det += fmt_double(d.auroc_all) + "," + fmt_double(d.pr_auc_all) + "," +
             fmt_double(d.auroc_boundary) + "," + fmt_double(d.auroc_gap);
    } else {
      det += ",,";
    }
    det += '\n';
  }
  files["detectors.csv"] = det;

  std::string rc = "threshold,coverage,precision\n";
  for (const RiskCoveragePoint& p : r.risk_coverage) {
    rc += fmt_double(p.threshold) + "," + fmt_double(p.coverage) + "," + fmt_double(p.precision) +
          "\n";
  }
  files["risk_coverage.csv"] = rc;

  std::string ph = "tag,count,mean_confidence,accuracy,dissociation\n";
  auto tag_row = [&](const char* tag, const TagStats& t) {
    ph += std::string(tag) + "," + std::to_string(t.count) + "," + fmt_double(t.mean_confidence) +
          "," + fmt_double(t.accuracy) + "," + fmt_double(t.dissociation) + "\n";
  };
  tag_row("in_domain", r.phenotype.in_domain);
  tag_row("boundary", r.phenotype.boundary);
  tag_row("gap", r.phenotype.gap);
  files["phenotype.csv"] = ph;

  std::string pp = "expert,owner,count,mean_confidence,accuracy\n";
  for (const PairPhenotypeRow& p : r.pair_phenotype) {
    pp += std::to_string(p.expert_domain) + "," + std::to_string(p.owner_domain) + "," +
          std::to_string(p.count) + "," + fmt_double(p.mean_confidence) + "," +
          fmt_double(p.accuracy) + "\n";
  }
  files["pair_phenotype.csv"] = pp;

  std::string sm = "key,value\n";
  if (r.phenotype.localization_infinite) {
    sm += "boundary_localization_ratio,inf\n";
  } else if (r.phenotype.boundary_localization_ratio.has_value()) {
    sm += "boundary_localization_ratio," + fmt_double(*r.phenotype.boundary_localization_ratio) +
          "\n";
  } else {
    sm += "boundary_localization_ratio,\n";
  }
  sm += "ece," + fmt_double(r.phenotype.ece) + "\n";
  sm += "entropy_distance_spearman," + fmt_double(r.entropy_distance_spearman) + "\n";
  sm += "in_domain_test_accuracy," + fmt_double(r.in_domain_test_accuracy) + "\n";
  if (r.pre_finetune.has_value()) {
    sm += "pre_finetune_entropy_distance_spearman," +
          fmt_double(r.pre_finetune->entropy_distance_spearman) + "\n";
    sm += "pre_finetune_in_domain_test_accuracy," +
          fmt_double(r.pre_finetune->in_domain_test_accuracy) + "\n";
  }
  sm += "calibration_mode," + r.calibration.mode + "\n";
  sm += "calibration_temperature," + fmt_double(r.calibration.temperature) + "\n";
  sm += "calibration_adaptive_a," + fmt_double(r.calibration.adaptive_a) + "\n";
  sm += "calibration_adaptive_b," + fmt_double(r.calibration.adaptive_b) + "\n";
  files["summary.csv"] = sm;

  std::string mon = "kind,name,count,mean,min,max\n";
  for (const SignalSummary& s : r.monitoring.signals) {
    mon += "signal," + s.name + "," + std::to_string(s.count) + "," + fmt_double(s.mean) + "," +
           fmt_double(s.min) + "," + fmt_double(s.max) + "\n";
  }
  for (const auto& [k, v] : r.monitoring.verdict_counts) {
    mon += "verdict," + k + "," + std::to_string(v) + ",,,\n";
  }
  for (const auto& [k, v] : r.monitoring.action_counts) {
    mon += "action," + k + "," + std::to_string(v) + ",,,\n";
  }
  files["monitoring.csv"] = mon;

  return files;
}

AbComparison ab_compare(const MetricsReport& a, const MetricsReport& b) {
  if (a.benchmark_hash != b.benchmark_hash) {
    throw ComparisonError("ab_compare: runs use different benchmarks (" + a.benchmark_hash +
                          " vs " + b.benchmark_hash + ")");
  }
  AbComparison cmp;
  cmp.benchmark_hash = a.benchmark_hash;
  cmp.config_hash_a = a.config_hash;
  cmp.config_hash_b = b.config_hash;

  std::map<std::string, const DetectorRow*> b_rows;
  for (const DetectorRow& d : b.detectors) b_rows[d.name] = &d;
  for (const DetectorRow& da : a.detectors) {
    DetectorDelta delta;
    delta.name = da.name;
    delta.available_a = da.available;
    auto it = b_rows.find(da.name);
    if (it != b_rows.end()) {
      delta.available_b = it->second->available;
      if (da.available && it->second->available) {
        delta.auroc_delta = it->second->auroc_all - da.auroc_all;
        delta.pr_auc_delta = it->second->pr_auc_all - da.pr_auc_all;
      }
    }
    cmp.detectors.push_back(std::move(delta));
  }

  cmp.boundary_dissociation_delta = b.phenotype.boundary.dissociation - a.phenotype.boundary.dissociation;
  cmp.gap_dissociation_delta = b.phenotype.gap.dissociation - a.phenotype.gap.dissociation;
  cmp.in_domain_accuracy_delta = b.in_domain_test_accuracy - a.in_domain_test_accuracy;
  cmp.ece_delta = b.phenotype.ece - a.phenotype.ece;
  cmp.entropy_distance_spearman_delta = b.entropy_distance_spearman - a.entropy_distance_spearman;
  return cmp;
}

std::string ab_comparison_to_json(const AbComparison& cmp) {
  JsonWriter w;
  w.begin_obj();
  w.key("benchmark_hash");
  w.value_str(cmp.benchmark_hash);
  w.key("config_hash_a");
  w.value_str(cmp.config_hash_a);
  w.key("config_hash_b");
  w.value_str(cmp.config_hash_b);
  w.key("detectors");
  w.begin_arr();
  for (const DetectorDelta& d : cmp.detectors) {
    w.begin_obj();
    w.key("name");
    w.value_str(d.name);
    w.key("available_a");
    w.value_bool(d.available_a);
    w.key("available_b");
    w.value_bool(d.available_b);
    w.key("auroc_delta");
    if (d.auroc_delta.has_value()) {
      w.value_num(*d.auroc_delta);
    } else {
      w.value_null();
    }
    w.key("pr_auc_delta");
    if (d.pr_auc_delta.has_value()) {
      w.value_num(*d.pr_auc_delta);
    } else {
      w.value_null();
    }
    w.end_obj();
  }
  w.end_arr();
  w.key("boundary_dissociation_delta");
  w.value_num(cmp.boundary_dissociation_delta);
  w.key("gap_dissociation_delta");
  w.value_num(cmp.gap_dissociation_delta);
  w.key("in_domain_accuracy_delta");
  w.value_num(cmp.in_domain_accuracy_delta);
  w.key("ece_delta");
  w.value_num(cmp.ece_delta);
  w.key("entropy_distance_spearman_delta");
  w.value_num(cmp.entropy_distance_spearman_delta);
  w.end_obj();
  std::string text = std::move(w).str();
  text += '\n';
  return text;
}

}  // namespace moebound
