#pragma once

#include <map>
#include <optional>
#include <string>

#include "moebound/calibration.hpp"
#include "moebound/detection.hpp"
#include "moebound/router.hpp"

namespace moebound {

// Flat container of named float arrays, stored as readable text that
// round-trips bit-exactly. No layout knowledge lives here; model bundling
// sits on top.
using ArrayStore = std::map<std::string, Mat>;

void save_array_store(const ArrayStore& store, const std::string& path);
ArrayStore load_array_store(const std::string& path);

// Everything the evaluation loop needs to replay decisions.
struct ModelBundle {
  std::vector<ExpertModel> experts;
  MlpParams embed_net;
  std::vector<ExpertStats> stats;
  RouterModel router;
  std::optional<MetaExpertModel> meta;

  // Calibration state shared by all experts.
  CalibrationMode calibration_mode = CalibrationMode::kNone;
  double temperature = 1.0;
  AdaptiveTempParams adaptive;

  friend bool operator==(const ModelBundle&, const ModelBundle&) = default;
};

void save_model_bundle(const ModelBundle& bundle, const std::string& path);
ModelBundle load_model_bundle(const std::string& path);

}  // namespace moebound
