#include "evpose/config.hpp"

#include <fstream>
#include <set>

#include "evpose/error.hpp"

namespace evpose {

using nlohmann::ordered_json;

namespace {

// Reads the keys of one object, rejecting any key not consumed.
class Section {
 public:
  Section(const ordered_json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw Error(Errc::ConfigError, name_ + ": expected a table");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw Error(Errc::ConfigError, name_ + "." + key + ": wrong type");
    }
  }

  const ordered_json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw Error(Errc::ConfigError, "unknown key '" + name_ + "." + key + "'");
  }

 private:
  const ordered_json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

AggregationMode parse_mode(const std::string& s) {
  if (s == "count") return AggregationMode::Count;
  if (s == "polarity") return AggregationMode::Polarity;
  throw Error(Errc::ConfigError, "events.mode must be 'count' or 'polarity'");
}

FlowSource parse_source(const std::string& s) {
  if (s == "gray") return FlowSource::Gray;
  if (s == "events") return FlowSource::Events;
  if (s == "ground_truth") return FlowSource::GroundTruth;
  throw Error(Errc::ConfigError, "flow.source must be 'gray', 'events' or 'ground_truth'");
}

}  // namespace

std::string flow_source_name(FlowSource source) {
  switch (source) {
    case FlowSource::Gray: return "gray";
    case FlowSource::Events: return "events";
    case FlowSource::GroundTruth: return "ground_truth";
  }
  return "gray";
}

PipelineConfig parse_config(const ordered_json& j) {
  PipelineConfig c;
  Section root(j, "config");
  root.get("seed", c.seed);
  if (const auto* s = root.child("camera")) {
    Section sec(*s, "camera");
    sec.get("fx", c.camera.fx);
    sec.get("fy", c.camera.fy);
    sec.get("cx", c.camera.cx);
    sec.get("cy", c.camera.cy);
    sec.get("width", c.camera.width);
    sec.get("height", c.camera.height);
    sec.finish();
    if (!(c.camera.fx > 0.0 && c.camera.fy > 0.0) || c.camera.width < 1 || c.camera.height < 1)
      throw Error(Errc::ConfigError, "camera: focal lengths and raster must be positive");
  }
  if (const auto* s = root.child("model")) {
    Section sec(*s, "model");
    sec.get("path", c.model_path);
    sec.finish();
  }
  if (const auto* s = root.child("sim")) {
    Section sec(*s, "sim");
    sec.get("script", c.script);
    sec.get("contrast", c.sim.contrast);
    sec.get("fps", c.sim.fps);
    sec.get("steps", c.sim.steps);
    sec.get("substeps", c.sim.substeps);
    sec.get("log_eps", c.sim.log_eps);
    sec.finish();
  }
  if (const auto* s = root.child("events")) {
    Section sec(*s, "events");
    sec.get("channels", c.channels);
    std::string mode = "count";
    sec.get("mode", mode);
    c.mode = parse_mode(mode);
    sec.finish();
    if (c.channels < 1) throw Error(Errc::ConfigError, "events.channels must be >= 1");
  }
  if (const auto* s = root.child("flow")) {
    Section sec(*s, "flow");
    std::string source = "gray";
    sec.get("source", source);
    c.flow_source = parse_source(source);
    sec.get("eps", c.flow.eps);
    sec.get("lambda_smooth", c.flow.lambda_smooth);
    sec.get("iterations", c.flow.iterations);
    sec.get("step", c.flow.step);
    sec.get("pyramid_levels", c.flow.pyramid_levels);
    sec.get("tolerance", c.flow.tolerance);
    sec.finish();
    if (!(c.flow.eps > 0.0) || !(c.flow.lambda_smooth >= 0.0) || c.flow.iterations < 0 || c.flow.pyramid_levels < 1 ||
        !(c.flow.step > 0.0) || !(c.flow.tolerance >= 0.0))
      throw Error(Errc::ConfigError, "flow: invalid solver settings");
  }
  if (const auto* s = root.child("fit")) {
    Section sec(*s, "fit");
    sec.get("max_iters", c.fit.max_iters);
    sec.get("initial_step", c.fit.initial_step);
    sec.get("tolerance", c.fit.tolerance);
    sec.get("warm_start", c.fit.warm_start);
    sec.get("damping", c.fit.damping);
    sec.get("tau", c.fit.tau);
    sec.get("history", c.fit.history);
    sec.get("precondition", c.fit.precondition);
    sec.get("refresh_every", c.fit.refresh_every);
    sec.get("supervised", c.supervised);
    std::string format = "rot6d";
    sec.get("rotation_format", format);
    try {
      c.rotation_format = parse_rotation_format(format);
    } catch (const Error&) {
      throw Error(Errc::ConfigError, "fit.rotation_format must be 'rot6d' or 'axis_angle'");
    }
    sec.finish();
  }
  if (const auto* s = root.child("weights")) {
    Section sec(*s, "weights");
    sec.get("trans", c.fit.weights.trans);
    sec.get("pose", c.fit.weights.pose);
    sec.get("joints3d", c.fit.weights.joints3d);
    sec.get("joints2d", c.fit.weights.joints2d);
    sec.get("flow", c.fit.weights.flow);
    sec.finish();
  }
  if (const auto* s = root.child("metrics")) {
    Section sec(*s, "metrics");
    sec.get("pckh_fraction", c.pckh_fraction);
    sec.finish();
    if (!(c.pckh_fraction > 0.0)) throw Error(Errc::ConfigError, "metrics.pckh_fraction must be > 0");
  }
  root.finish();

  c.sim.seed = c.seed;
  c.fit.seed = c.seed;
  c.fit.steps = c.sim.steps;
  c.fit.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::ConfigError, "cannot open config file " + path.string());
  ordered_json j;
  try {
    j = ordered_json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, path.string() + ": " + e.what());
  }
  return parse_config(j);
}

ordered_json config_to_json(const PipelineConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  j["camera"] = {{"fx", c.camera.fx}, {"fy", c.camera.fy}, {"cx", c.camera.cx}, {"cy", c.camera.cy},
                 {"width", c.camera.width}, {"height", c.camera.height}};
  j["model"] = {{"path", c.model_path}};
  j["sim"] = {{"script", c.script}, {"contrast", c.sim.contrast}, {"fps", c.sim.fps}, {"steps", c.sim.steps},
              {"substeps", c.sim.substeps}, {"log_eps", c.sim.log_eps}};
  j["events"] = {{"channels", c.channels}, {"mode", c.mode == AggregationMode::Count ? "count" : "polarity"}};
  j["flow"] = {{"source", flow_source_name(c.flow_source)}, {"eps", c.flow.eps},
               {"lambda_smooth", c.flow.lambda_smooth}, {"iterations", c.flow.iterations},
               {"step", c.flow.step}, {"pyramid_levels", c.flow.pyramid_levels},
               {"tolerance", c.flow.tolerance}};
  j["fit"] = {{"max_iters", c.fit.max_iters},   {"initial_step", c.fit.initial_step},
              {"tolerance", c.fit.tolerance},   {"warm_start", c.fit.warm_start},
              {"damping", c.fit.damping},       {"tau", c.fit.tau},
              {"history", c.fit.history},       {"precondition", c.fit.precondition},
              {"refresh_every", c.fit.refresh_every}, {"supervised", c.supervised},
              {"rotation_format", format_name(c.rotation_format)}};
  j["weights"] = {{"trans", c.fit.weights.trans},       {"pose", c.fit.weights.pose},
                  {"joints3d", c.fit.weights.joints3d}, {"joints2d", c.fit.weights.joints2d},
                  {"flow", c.fit.weights.flow}};
  j["metrics"] = {{"pckh_fraction", c.pckh_fraction}};
  return j;
}

}  // namespace evpose
