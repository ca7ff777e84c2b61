#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "evpose/events.hpp"
#include "evpose/fitter.hpp"
#include "evpose/flow.hpp"
#include "evpose/io.hpp"
#include "evpose/simulator.hpp"

namespace evpose {

enum class FlowSource { Gray, Events, GroundTruth };

/// Everything numeric a command needs. Unknown keys are rejected; missing
/// keys keep their defaults. Keyframes come from `script`.
struct PipelineConfig {
  unsigned seed = 0;  // drives the model, the simulator texture and the fitter
  Camera camera;
  std::string model_path;  // empty = built-in mini body
  std::string script = "arm_raise";
  SimConfig sim;
  int channels = 4;
  AggregationMode mode = AggregationMode::Count;
  FlowSource flow_source = FlowSource::Gray;
  FlowSolverConfig flow;
  FitConfig fit;
  bool supervised = true;
  RotationFormat rotation_format = RotationFormat::Rot6d;
  double pckh_fraction = 0.5;
};

PipelineConfig parse_config(const nlohmann::ordered_json& j);
PipelineConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json config_to_json(const PipelineConfig& config);

std::string flow_source_name(FlowSource source);

}  // namespace evpose
