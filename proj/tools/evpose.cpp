// evpose: command-line front end for simulation, event aggregation, optical
// flow, sequential fitting and evaluation.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "evpose/config.hpp"
#include "evpose/error.hpp"
#include "evpose/metrics.hpp"

namespace fs = std::filesystem;
using namespace evpose;
using nlohmann::ordered_json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

bool g_verbose = false;

void log(const std::string& msg) { std::cerr << "[evpose] " << msg << "\n"; }
void debug(const std::string& msg) {
  if (g_verbose) log(msg);
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void require_file(const fs::path& p, const char* what) {
  if (!fs::exists(p)) throw Error(Errc::ConfigError, std::string(what) + " not found: " + p.string());
}

PipelineConfig config_from(const std::string& path) {
  if (path.empty()) return parse_config(ordered_json::object());
  require_file(path, "config file");
  return load_config(path);
}

BodyModel model_from(const PipelineConfig& cfg, const std::string& override_path = {}) {
  const std::string path = override_path.empty() ? cfg.model_path : override_path;
  if (path.empty()) return make_mini_body(cfg.seed);
  require_file(path, "model file");
  return load_model(path);
}

std::string indexed(const char* stem, std::size_t i) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s_%03zu.bin", stem, i);
  return buf;
}

std::vector<std::string> string_list(const ordered_json& j, const char* key, const fs::path& index) {
  if (!j.contains(key) || !j.at(key).is_array())
    throw Error(Errc::SchemaViolation, index.string() + ": missing list '" + key + "'");
  std::vector<std::string> out;
  for (const auto& v : j.at(key)) out.push_back(v.get<std::string>());
  return out;
}

std::vector<FlowField> read_flow_index(const fs::path& index) {
  require_file(index, "flow index");
  const ordered_json j = read_json(index);
  std::vector<FlowField> flows;
  for (const std::string& f : string_list(j, "flows", index)) flows.push_back(read_flow(index.parent_path() / f));
  return flows;
}

std::vector<EventFrame> read_frame_index(const fs::path& index, const char* key) {
  require_file(index, "frame index");
  const ordered_json j = read_json(index);
  std::vector<EventFrame> frames;
  for (const std::string& f : string_list(j, key, index)) frames.push_back(read_frame(index.parent_path() / f));
  return frames;
}


// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string config, out;
};

int cmd_simulate(const SimulateArgs& a) {
  const PipelineConfig cfg = config_from(a.config);
  const BodyModel model = model_from(cfg);
  SimConfig sim = cfg.sim;
  sim.keyframes = motion_script(cfg.script, model);
  const SimOutput out = simulate(sim, model, cfg.camera);
  write_simulation(a.out, out, model, cfg.camera, sim);
  log("simulated " + std::to_string(out.flows.size()) + " intervals, " + std::to_string(out.events.size()) +
      " events -> " + (fs::path(a.out) / "manifest.json").string());
  return 0;
}

// ---------------------------------------------------------------- aggregate

struct AggregateArgs {
  std::string config, events, manifest, out;
};

ordered_json run_aggregate(const PipelineConfig& cfg, const fs::path& events_path, const fs::path& manifest_path,
                           const fs::path& out_dir) {
  require_file(events_path, "event file");
  require_file(manifest_path, "manifest");
  const EventStream stream = read_event_file(events_path);
  const ordered_json manifest = read_json(manifest_path);
  if (!manifest.contains("frame_times")) throw Error(Errc::SchemaViolation, "manifest has no frame_times");
  const auto times = manifest.at("frame_times").get<std::vector<std::uint64_t>>();
  const auto packets = packetize(stream.events, times);

  fs::create_directories(out_dir);
  ordered_json names = ordered_json::array();
  double aggregated = 0.0;
  std::size_t packeted = 0;
  for (std::size_t i = 0; i < packets.size(); ++i) {
    const EventFrame frame = aggregate_frame(packets[i], cfg.channels, static_cast<int>(stream.height),
                                             static_cast<int>(stream.width), cfg.mode);
    packeted += packets[i].events.size();
    if (cfg.mode == AggregationMode::Count) aggregated += frame.sum();
    const std::string name = indexed("frame", i);
    write_frame(out_dir / name, frame);
    names.push_back(name);
  }
  ordered_json summary;
  summary["events_in_stream"] = stream.events.size();
  summary["events_in_packets"] = packeted;
  if (cfg.mode == AggregationMode::Count) summary["events_in_frames"] = static_cast<std::uint64_t>(aggregated);
  summary["channels"] = cfg.channels;
  summary["mode"] = cfg.mode == AggregationMode::Count ? "count" : "polarity";
  summary["height"] = stream.height;
  summary["width"] = stream.width;
  summary["frames"] = std::move(names);
  write_json(out_dir / "frames.json", summary);
  const bool conserved = cfg.mode != AggregationMode::Count ||
                         (packeted == stream.events.size() && static_cast<std::size_t>(aggregated) == packeted);
  log("aggregated " + std::to_string(packets.size()) + " packets of " + std::to_string(cfg.channels) +
      " channels; events: stream " + std::to_string(stream.events.size()) + ", packets " + std::to_string(packeted) +
      (cfg.mode == AggregationMode::Count ? ", frames " + std::to_string(static_cast<std::size_t>(aggregated)) : "") +
      (conserved ? " (conserved)" : " (NOT conserved)"));
  return summary;
}

int cmd_aggregate(const AggregateArgs& a) {
  run_aggregate(config_from(a.config), a.events, a.manifest, a.out);
  return 0;
}

// ---------------------------------------------------------------- flow

struct FlowArgs {
  std::string config, first, second, kind = "gray", out, trace;
  std::string manifest, frames, out_dir;
};

Image frame_to_image(const EventFrame& frame, const std::string& kind) {
  if (kind == "gray") {
    if (frame.channels() != 1) throw Error(Errc::ConfigError, "gray input must have a single channel");
    return Image(frame.channel(0));
  }
  return pseudo_intensity(frame);
}

std::string trace_csv(const std::vector<std::pair<std::size_t, FlowTraceEntry>>& rows) {
  std::ostringstream os;
  os << "interval,level,iteration,objective\n";
  for (const auto& [interval, e] : rows)
    os << interval << "," << e.level << "," << e.iteration << "," << num(e.objective) << "\n";
  return os.str();
}

// Flows for every interval of a simulated sequence, by the configured source.
std::vector<FlowField> run_flow_sequence(const PipelineConfig& cfg, const fs::path& manifest_path,
                                         const fs::path& frames_index, const fs::path& out_dir) {
  require_file(manifest_path, "manifest");
  const ordered_json manifest = read_json(manifest_path);
  std::vector<FlowField> flows;
  std::vector<std::pair<std::size_t, FlowTraceEntry>> rows;

  if (cfg.flow_source == FlowSource::GroundTruth) {
    flows = read_flow_index(manifest_path);
  } else if (cfg.flow_source == FlowSource::Gray) {
    const auto gray = read_frame_index(manifest_path, "gray_frames");
    for (std::size_t i = 0; i + 1 < gray.size(); ++i) {
      const FlowSolution sol =
          solve_flow(frame_to_image(gray[i], "gray"), frame_to_image(gray[i + 1], "gray"), cfg.flow);
      for (const auto& e : sol.trace) rows.emplace_back(i, e);
      flows.push_back(sol.flow);
      debug("flow interval " + std::to_string(i) + ": objective " + num(sol.trace.back().objective));
    }
  } else {
    if (frames_index.empty()) throw Error(Errc::ConfigError, "flow source 'events' needs --frames");
    const auto frames = read_frame_index(frames_index, "frames");
    for (std::size_t i = 0; i < frames.size(); ++i) {
      // Interval i pairs event frame i with its predecessor; the first interval
      // has none and is paired with itself.
      const FlowSolution sol = flow_from_events(frames[i == 0 ? 0 : i - 1], frames[i], cfg.flow);
      for (const auto& e : sol.trace) rows.emplace_back(i, e);
      flows.push_back(sol.flow);
    }
  }

  fs::create_directories(out_dir);
  ordered_json names = ordered_json::array();
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const std::string name = indexed("flow", i);
    write_flow(out_dir / name, flows[i]);
    names.push_back(name);
  }
  ordered_json index;
  index["source"] = flow_source_name(cfg.flow_source);
  index["flows"] = std::move(names);
  write_json(out_dir / "flows.json", index);
  write_text(out_dir / "flow_objective.csv", trace_csv(rows));
  log("wrote " + std::to_string(flows.size()) + " flow fields (" + flow_source_name(cfg.flow_source) + ") -> " +
      (out_dir / "flows.json").string());
  return flows;
}

int cmd_flow(const FlowArgs& a) {
  const PipelineConfig cfg = config_from(a.config);
  if (!a.manifest.empty()) {
    if (a.out_dir.empty()) throw Error(Errc::ConfigError, "--manifest needs --out-dir");
    run_flow_sequence(cfg, a.manifest, a.frames, a.out_dir);
    return 0;
  }
  if (a.first.empty() || a.second.empty() || a.out.empty())
    throw Error(Errc::ConfigError, "need --first, --second and --out (or --manifest and --out-dir)");
  require_file(a.first, "first frame");
  require_file(a.second, "second frame");
  const EventFrame f0 = read_frame(a.first), f1 = read_frame(a.second);
  if (f0.height() != f1.height() || f0.width() != f1.width())
    throw Error(Errc::DimensionMismatch, "input rasters differ: " + std::to_string(f0.height()) + "x" +
                                             std::to_string(f0.width()) + " vs " + std::to_string(f1.height()) + "x" +
                                             std::to_string(f1.width()));
  const FlowSolution sol = solve_flow(frame_to_image(f0, a.kind), frame_to_image(f1, a.kind), cfg.flow);
  write_flow(a.out, sol.flow);
  std::vector<std::pair<std::size_t, FlowTraceEntry>> rows;
  for (const auto& e : sol.trace) rows.emplace_back(0, e);
  const fs::path trace = a.trace.empty() ? fs::path(a.out).replace_extension(".csv") : fs::path(a.trace);
  write_text(trace, trace_csv(rows));
  log("flow objective " + num(sol.trace.front().objective) + " -> " + num(sol.trace.back().objective));
  return 0;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string config, model, begin, flows, targets, frames, out;
};

void write_fit(const fs::path& out_dir, const PoseState& begin, const FitResult& r, const PipelineConfig& cfg) {
  fs::create_directories(out_dir);
  std::vector<PoseState> poses{begin};
  poses.insert(poses.end(), r.states.begin(), r.states.end());
  write_poses(out_dir / "poses.json", poses, cfg.rotation_format);

  std::ostringstream loss;
  loss << "step,term,value\n";
  for (std::size_t i = 0; i < r.losses.size(); ++i) {
    const StepLoss& l = r.losses[i];
    const std::pair<const char*, double> rows[] = {{"trans", l.trans},       {"pose", l.pose},
                                                   {"joints3d", l.joints3d}, {"joints2d", l.joints2d},
                                                   {"flow", l.flow},         {"damping", l.damping},
                                                   {"total", r.objectives[i]}};
    for (const auto& [name, value] : rows) loss << i + 1 << "," << name << "," << num(value) << "\n";
  }
  write_text(out_dir / "loss.csv", loss.str());

  std::ostringstream conv;
  conv << "step,iterations,converged,initial_objective,final_objective\n";
  for (std::size_t i = 0; i < r.traces.size(); ++i)
    conv << i + 1 << "," << r.iterations[i] << "," << (r.converged[i] ? 1 : 0) << "," << num(r.traces[i].front())
         << "," << num(r.traces[i].back()) << "\n";
  write_text(out_dir / "convergence.csv", conv.str());

  std::ostringstream trace;
  trace << "step,iteration,objective\n";
  for (std::size_t i = 0; i < r.traces.size(); ++i)
    for (std::size_t k = 0; k < r.traces[i].size(); ++k) trace << i + 1 << "," << k << "," << num(r.traces[i][k]) << "\n";
  write_text(out_dir / "trace.csv", trace.str());
}

FitResult run_fit(const PipelineConfig& cfg, const BodyModel& model, const PoseState& begin,
                  const std::vector<FlowField>& flows, const SequenceTarget* targets,
                  const std::vector<EventFrame>& frames, const fs::path& out_dir) {
  const FitResult r = fit_sequence(begin, frames, flows, cfg.supervised ? targets : nullptr, model, cfg.camera, cfg.fit);
  write_fit(out_dir, begin, r, cfg);
  std::size_t converged = 0;
  for (bool c : r.converged) converged += c ? 1 : 0;
  log("fitted " + std::to_string(r.states.size()) + " intervals (" + (cfg.supervised ? "supervised" : "coherence only") +
      "), " + std::to_string(converged) + " converged -> " + (out_dir / "poses.json").string());
  return r;
}

int cmd_fit(const FitArgs& a) {
  const PipelineConfig cfg = config_from(a.config);
  require_file(a.begin, "begin pose");
  require_file(a.flows, "flow index");
  if (!a.targets.empty()) require_file(a.targets, "targets");
  const BodyModel model = model_from(cfg, a.model);
  const PoseState begin = read_pose(a.begin);
  const std::vector<FlowField> flows = read_flow_index(a.flows);
  std::vector<EventFrame> frames;
  if (!a.frames.empty()) frames = read_frame_index(a.frames, "frames");
  SequenceTarget targets;
  if (!a.targets.empty()) targets = read_targets(a.targets);
  run_fit(cfg, model, begin, flows, a.targets.empty() ? nullptr : &targets, frames, a.out);
  return 0;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string config, pred, gt, model, out;
};

ordered_json frame_json(const FrameMetrics& f) {
  return {{"mpjpe", f.mpjpe}, {"pa_mpjpe", f.pa_mpjpe}, {"pel_mpjpe", f.pel_mpjpe}, {"pckh", f.pckh}, {"pve", f.pve}};
}

MetricsReport run_eval(const PipelineConfig& cfg, const BodyModel& model, const std::vector<PoseState>& pred,
                       const std::vector<PoseState>& gt, const fs::path& out_dir) {
  if (pred.size() != gt.size())
    throw Error(Errc::ShapeMismatch, "predicted and ground-truth sequences differ in length: " +
                                         std::to_string(pred.size()) + " vs " + std::to_string(gt.size()));
  MetricsInput in;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].theta.size() != model.parents.size() || gt[i].theta.size() != model.parents.size())
      throw Error(Errc::ShapeMismatch, "pose joint count differs from the model at frame " + std::to_string(i));
    const ForwardResult p = forward(model, pred[i]);
    const ForwardResult g = forward(model, gt[i]);
    in.pred_joints.push_back(p.joints);
    in.gt_joints.push_back(g.joints);
    in.pred_verts.push_back(p.vertices);
    in.gt_verts.push_back(g.vertices);
  }
  const MetricsReport report = evaluate(in, model.pelvis, model.head, model.neck, cfg.pckh_fraction);

  ordered_json j;
  j["frames"] = report.frames.size();
  j["mean"] = frame_json(report.mean);
  if (!report.frames.empty()) j["final"] = frame_json(report.frames.back());
  ordered_json per = ordered_json::array();
  for (const FrameMetrics& f : report.frames) per.push_back(frame_json(f));
  j["per_frame"] = std::move(per);
  fs::create_directories(out_dir);
  write_json(out_dir / "metrics.json", j);

  std::ostringstream csv;
  csv << "frame,mpjpe_mm,pa_mpjpe_mm,pel_mpjpe_mm,pckh,pve_mm\n";
  for (std::size_t i = 0; i < report.frames.size(); ++i) {
    const FrameMetrics& f = report.frames[i];
    csv << i << "," << num(f.mpjpe) << "," << num(f.pa_mpjpe) << "," << num(f.pel_mpjpe) << "," << num(f.pckh) << ","
        << num(f.pve) << "\n";
  }
  write_text(out_dir / "metrics.csv", csv.str());
  log("MPJPE " + num(report.mean.mpjpe) + " mm, PA-MPJPE " + num(report.mean.pa_mpjpe) + " mm, PCKh " +
      num(report.mean.pckh) + " -> " + (out_dir / "metrics.json").string());
  return report;
}

int cmd_eval(const EvalArgs& a) {
  const PipelineConfig cfg = config_from(a.config);
  require_file(a.pred, "prediction");
  require_file(a.gt, "ground truth");
  const BodyModel model = model_from(cfg, a.model);
  run_eval(cfg, model, read_poses(a.pred), read_poses(a.gt), a.out);
  return 0;
}

// ---------------------------------------------------------------- pipeline

struct PipelineArgs {
  std::string config, out;
};

int cmd_pipeline(const PipelineArgs& a) {
  const PipelineConfig cfg = config_from(a.config);
  const fs::path out = a.out;
  const BodyModel model = model_from(cfg);

  SimConfig sim = cfg.sim;
  sim.keyframes = motion_script(cfg.script, model);
  const SimOutput simulated = simulate(sim, model, cfg.camera);
  write_simulation(out / "sim", simulated, model, cfg.camera, sim);
  log("simulated " + std::to_string(simulated.events.size()) + " events");

  const fs::path manifest = out / "sim" / "manifest.json";
  const ordered_json agg = run_aggregate(cfg, out / "sim" / "events.evt", manifest, out / "frames");
  const std::vector<FlowField> flows = run_flow_sequence(cfg, manifest, out / "frames" / "frames.json", out / "flow");
  const std::vector<EventFrame> frames = read_frame_index(out / "frames" / "frames.json", "frames");

  const FitResult fit = run_fit(cfg, model, simulated.poses.front(), flows, &simulated.targets, frames, out / "fit");
  std::vector<PoseState> pred{simulated.poses.front()};
  pred.insert(pred.end(), fit.states.begin(), fit.states.end());
  const MetricsReport report = run_eval(cfg, model, pred, simulated.poses, out / "eval");

  ordered_json summary;
  summary["version"] = EVPOSE_VERSION;
  summary["config"] = config_to_json(cfg);
  summary["events"] = simulated.events.size();
  summary["events_in_frames"] = agg.contains("events_in_frames") ? agg.at("events_in_frames") : ordered_json();
  summary["intervals"] = fit.states.size();
  ordered_json iters = ordered_json::array();
  for (int it : fit.iterations) iters.push_back(it);
  summary["iterations"] = std::move(iters);
  summary["mean"] = frame_json(report.mean);
  summary["final"] = frame_json(report.frames.back());
  write_json(out / "summary.json", summary);
  log("pipeline summary -> " + (out / "summary.json").string());
  return 0;
}

// ---------------------------------------------------------------- check-gradients

struct GradientArgs {
  unsigned seed = 0;
  int trials = 20;
  std::string out;
};

int cmd_check_gradients(const GradientArgs& a) {
  const GradientCheckReport r = check_gradients(a.seed, a.trials);
  ordered_json j;
  j["trials"] = r.trials;
  j["passed"] = r.passed;
  j["min_counted_vertices"] = r.min_counted_vertices;
  ordered_json errs = ordered_json::object();
  for (const auto& [term, err] : r.max_rel_error) errs[term_name(term)] = err;
  j["max_rel_error"] = std::move(errs);
  if (a.out.empty())
    std::cout << j.dump(2) << "\n";
  else
    write_json(a.out, j);
  return r.passed ? 0 : kExitRuntime;
}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::ConfigError:
    case Errc::SchemaViolation:
    case Errc::ShapeMismatch:
    case Errc::DimensionMismatch:
    case Errc::LengthMismatch:
      return kExitConfig;
    default:
      return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-based human pose and shape estimation toolkit"};
  app.set_version_flag("--version", std::string("evpose ") + EVPOSE_VERSION);
  int threads = 1;
  app.add_option("--threads", threads, "Maximum worker threads")->check(CLI::PositiveNumber);
  app.add_flag("-v,--verbose", g_verbose, "Verbose logging");
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Render a motion script to events, frames, flows and poses");
  c_sim->add_option("-c,--config", sim.config, "Config file (JSON)");
  c_sim->add_option("-o,--out", sim.out, "Output directory")->required();

  AggregateArgs agg;
  auto* c_agg = app.add_subcommand("aggregate", "Cut an event stream into M-channel event frames");
  c_agg->add_option("-c,--config", agg.config, "Config file (JSON)");
  c_agg->add_option("-e,--events", agg.events, "Input .evt file")->required();
  c_agg->add_option("-m,--manifest", agg.manifest, "Manifest with frame_times")->required();
  c_agg->add_option("-o,--out", agg.out, "Output directory")->required();

  FlowArgs flow;
  auto* c_flow = app.add_subcommand("flow", "Estimate optical flow between frames");
  c_flow->add_option("-c,--config", flow.config, "Config file (JSON)");
  c_flow->add_option("--first", flow.first, "First frame (.bin with sidecar)");
  c_flow->add_option("--second", flow.second, "Second frame (.bin with sidecar)");
  c_flow->add_option("--kind", flow.kind, "Input kind: gray or events")->check(CLI::IsMember({"gray", "events"}));
  c_flow->add_option("-o,--out", flow.out, "Output flow file (.bin)");
  c_flow->add_option("--trace", flow.trace, "Objective trace CSV (default: next to --out)");
  c_flow->add_option("--manifest", flow.manifest, "Simulation manifest: estimate every interval");
  c_flow->add_option("--frames", flow.frames, "Event frame index (frames.json) for source 'events'");
  c_flow->add_option("--out-dir", flow.out_dir, "Output directory for --manifest mode");

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "Fit per-interval pose and translation deltas");
  c_fit->add_option("-c,--config", fit.config, "Config file (JSON)");
  c_fit->add_option("--model", fit.model, "Model manifest (default: built-in mini body)");
  c_fit->add_option("--begin", fit.begin, "Beginning pose JSON")->required();
  c_fit->add_option("--flows", fit.flows, "Flow index JSON (a manifest or flows.json)")->required();
  c_fit->add_option("--targets", fit.targets, "Supervision targets JSON");
  c_fit->add_option("--frames", fit.frames, "Event frame index, checked against the flows");
  c_fit->add_option("-o,--out", fit.out, "Output directory")->required();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Compare predicted and ground-truth pose sequences");
  c_eval->add_option("-c,--config", ev.config, "Config file (JSON)");
  c_eval->add_option("--pred", ev.pred, "Predicted poses JSON")->required();
  c_eval->add_option("--gt", ev.gt, "Ground-truth poses JSON")->required();
  c_eval->add_option("--model", ev.model, "Model manifest (default: built-in mini body)");
  c_eval->add_option("-o,--out", ev.out, "Output directory")->required();

  PipelineArgs pipe;
  auto* c_pipe = app.add_subcommand("pipeline", "simulate -> aggregate -> flow -> fit -> eval");
  c_pipe->add_option("-c,--config", pipe.config, "Config file (JSON)");
  c_pipe->add_option("-o,--out", pipe.out, "Output directory")->required();

  GradientArgs grad;
  auto* c_grad = app.add_subcommand("check-gradients", "Finite-difference check of the fitting objective");
  c_grad->add_option("--seed", grad.seed, "Random seed");
  c_grad->add_option("--trials", grad.trials, "Number of random instances")->check(CLI::NonNegativeNumber);
  c_grad->add_option("-o,--out", grad.out, "Report JSON (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*c_sim) return cmd_simulate(sim);
    if (*c_agg) return cmd_aggregate(agg);
    if (*c_flow) return cmd_flow(flow);
    if (*c_fit) return cmd_fit(fit);
    if (*c_eval) return cmd_eval(ev);
    if (*c_pipe) return cmd_pipeline(pipe);
    if (*c_grad) return cmd_check_gradients(grad);
  } catch (const Error& e) {
    log("error [" + std::string(errc_name(e.code())) + "]: " + e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    log(std::string("error: ") + e.what());
    return kExitRuntime;
  }
  return kExitRuntime;
}
