#include "evpose/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <tuple>

#include "evpose/error.hpp"
#include "evpose/io.hpp"

namespace evpose {

namespace {

Rot6d rot_about(const Eigen::Vector3d& axis, double angle) {
  return matrix_to_rot6d(axis_angle_to_matrix(axis.normalized() * angle));
}

std::string indexed(const char* stem, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03zu.bin", stem, i);
  return buf;
}

}  // namespace

void SimConfig::validate() const {
  if (!(contrast > 0.0)) throw Error(Errc::ConfigError, "contrast threshold must be > 0");
  if (!(fps > 0.0)) throw Error(Errc::ConfigError, "frame rate must be > 0");
  if (steps < 1) throw Error(Errc::ConfigError, "need at least one interval");
  if (substeps < 1) throw Error(Errc::ConfigError, "substeps must be >= 1");
  if (keyframes.size() < 2) throw Error(Errc::ConfigError, "need at least two keyframes");
  if (!(log_eps > 0.0)) throw Error(Errc::ConfigError, "log epsilon must be > 0");
  if (1e6 / fps < 2.0 * substeps) throw Error(Errc::ConfigError, "frame rate too high for microsecond timestamps");
}

PoseState standing_pose(const BodyModel& model) {
  PoseState pose = PoseState::rest(model);
  pose.theta[0] = rot_about(Eigen::Vector3d::UnitX(), std::numbers::pi);
  pose.d = Eigen::Vector3d(0.0, -0.07, 3.5);
  return pose;
}

std::vector<PoseState> motion_script(const std::string& name, const BodyModel& model) {
  const PoseState base = standing_pose(model);
  if (name == "static") return {base, base};
  if (name == "arm_raise") {
    // Shoulders swing from arms-down to above horizontal while the elbows flex.
    auto arms = [&](double shoulder, double elbow) {
      PoseState p = base;
      p.theta[16] = rot_about(Eigen::Vector3d::UnitZ(), -shoulder);
      p.theta[17] = rot_about(Eigen::Vector3d::UnitZ(), shoulder);
      p.theta[18] = rot_about(Eigen::Vector3d::UnitY(), -elbow);
      p.theta[19] = rot_about(Eigen::Vector3d::UnitY(), elbow);
      return p;
    };
    return {arms(1.2, 0.1), arms(0.4, 0.4), arms(-0.3, 0.2)};
  }
  if (name == "turn") {
    PoseState end = base;
    end.theta[0] = compose_pose(rot_about(Eigen::Vector3d::UnitY(), 0.4), base.theta[0]);
    end.d += Eigen::Vector3d(0.1, 0.0, 0.1);
    return {base, end};
  }
  throw Error(Errc::ConfigError, "unknown motion script '" + name + "'");
}

PoseState interpolate_keyframes(std::span<const PoseState> keyframes, double u) {
  if (keyframes.size() < 2) throw Error(Errc::ConfigError, "need at least two keyframes");
  const double pos = std::clamp(u, 0.0, 1.0) * static_cast<double>(keyframes.size() - 1);
  const std::size_t k = std::min(static_cast<std::size_t>(pos), keyframes.size() - 2);
  const double w = pos - static_cast<double>(k);
  const PoseState& a = keyframes[k];
  const PoseState& b = keyframes[k + 1];
  if (a.theta.size() != b.theta.size() || a.beta.size() != b.beta.size())
    throw Error(Errc::DimensionMismatch, "keyframes disagree in size");
  PoseState out;
  out.theta.resize(a.theta.size());
  for (std::size_t j = 0; j < a.theta.size(); ++j)
    out.theta[j] = matrix_to_rot6d(slerp(rot6d_to_matrix(a.theta[j]), rot6d_to_matrix(b.theta[j]), w));
  out.d = (1.0 - w) * a.d + w * b.d;
  out.beta = (1.0 - w) * a.beta + w * b.beta;
  return out;
}

std::vector<std::uint64_t> frame_times(int steps, double fps) {
  std::vector<std::uint64_t> out(steps + 1);
  for (int i = 0; i <= steps; ++i) out[i] = static_cast<std::uint64_t>(std::llround(i * 1e6 / fps));
  return out;
}

std::vector<Event> events_from_frames(std::span<const Image> frames, std::span<const std::uint64_t> times,
                                      double contrast, double log_eps) {
  if (frames.size() != times.size()) throw Error(Errc::LengthMismatch, "frame and time counts differ");
  if (!(contrast > 0.0)) throw Error(Errc::ConfigError, "contrast threshold must be > 0");
  std::vector<Event> events;
  if (frames.size() < 2) return events;
  const Eigen::Index h = frames[0].rows(), w = frames[0].cols();
  for (const Image& f : frames)
    if (f.rows() != h || f.cols() != w) throw Error(Errc::DimensionMismatch, "frames differ in size");
  for (std::size_t k = 1; k < times.size(); ++k)
    if (times[k] <= times[k - 1]) throw Error(Errc::UnsortedInput, "frame times must increase");

  const Image first = (frames[0].array() + log_eps).log().matrix();
  Image reference = first;
  Image previous = first;
  for (std::size_t k = 1; k < frames.size(); ++k) {
    const Image current = (frames[k].array() + log_eps).log().matrix();
    const double t0 = static_cast<double>(times[k - 1]);
    const double span = static_cast<double>(times[k] - times[k - 1]);
    const std::uint64_t t_last = times[k] - 1;
    for (Eigen::Index y = 0; y < h; ++y) {
      for (Eigen::Index x = 0; x < w; ++x) {
        const double l0 = previous(y, x), l1 = current(y, x);
        double& ref = reference(y, x);
        while (true) {
          int polarity;
          if (l1 - ref >= contrast) {
            polarity = 1;
          } else if (ref - l1 >= contrast) {
            polarity = -1;
          } else {
            break;
          }
          ref += polarity * contrast;
          const double frac = l1 != l0 ? std::clamp((ref - l0) / (l1 - l0), 0.0, 1.0) : 0.0;
          const auto t = std::min(static_cast<std::uint64_t>(t0 + frac * span), t_last);
          events.push_back({static_cast<std::uint16_t>(x), static_cast<std::uint16_t>(y), t,
                            static_cast<std::int16_t>(polarity)});
        }
      }
    }
    previous = current;
  }
  std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) {
    return std::tie(a.t, a.y, a.x, a.p) < std::tie(b.t, b.y, b.x, b.p);
  });
  return events;
}

std::vector<double> vertex_albedo(int vertex_count, unsigned seed) {
  std::mt19937 gen(seed);
  std::vector<double> out(vertex_count);
  for (double& a : out) a = 0.55 + 0.4 * (static_cast<double>(gen()) / 4294967295.0);
  return out;
}

SimOutput simulate(const SimConfig& config, const BodyModel& model, const Camera& camera) {
  config.validate();
  for (const PoseState& k : config.keyframes)
    if (static_cast<int>(k.theta.size()) != model.num_joints() || k.beta.size() != model.num_shapes())
      throw Error(Errc::DimensionMismatch, "keyframe does not match the model");

  SimOutput out;
  out.width = camera.width;
  out.height = camera.height;
  out.frame_times = frame_times(config.steps, config.fps);

  RenderOptions render;
  render.albedo = vertex_albedo(model.num_vertices(), config.seed);

  const int sub = config.substeps;
  std::vector<Image> fine_frames;
  std::vector<std::uint64_t> fine_times;
  for (int i = 0; i < config.steps; ++i) {
    for (int s = 0; s < sub; ++s) {
      const double u = (i + static_cast<double>(s) / sub) / config.steps;
      const PoseState pose = interpolate_keyframes(config.keyframes, u);
      fine_frames.push_back(render_intensity(model, pose, camera, render));
      const double t0 = static_cast<double>(out.frame_times[i]);
      const double t1 = static_cast<double>(out.frame_times[i + 1]);
      fine_times.push_back(static_cast<std::uint64_t>(std::llround(t0 + (t1 - t0) * s / sub)));
      if (s == 0) {
        out.poses.push_back(pose);
        out.frames.push_back(fine_frames.back());
      }
    }
  }
  const PoseState last = interpolate_keyframes(config.keyframes, 1.0);
  out.poses.push_back(last);
  fine_frames.push_back(render_intensity(model, last, camera, render));
  fine_times.push_back(out.frame_times.back());
  out.frames.push_back(fine_frames.back());

  out.events = events_from_frames(fine_frames, fine_times, config.contrast, config.log_eps);

  for (const PoseState& p : out.poses) out.vertices.push_back(forward(model, p).vertices);
  for (int i = 0; i < config.steps; ++i) {
    out.flows.push_back(ground_truth_flow(model, out.poses[i], out.poses[i + 1], camera));
    const ForwardResult fk = forward(model, out.poses[i + 1]);
    out.targets.d.push_back(out.poses[i + 1].d);
    out.targets.theta.push_back(out.poses[i + 1].theta);
    out.targets.joints3d.push_back(fk.joints);
    out.targets.joints2d.push_back(project(camera, fk.joints));
  }
  return out;
}

void write_simulation(const std::filesystem::path& dir, const SimOutput& out, const BodyModel& model,
                      const Camera& camera, const SimConfig& config) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "gray");
  fs::create_directories(dir / "flow");
  save_model(dir / "model.json", model);
  write_event_file(dir / "events.evt", out.events, out.width, out.height);

  nlohmann::ordered_json gray = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < out.frames.size(); ++i) {
    const std::string name = "gray/" + indexed("gray", i);
    EventFrame frame(1, out.height, out.width, out.frame_times[i], out.frame_times[i]);
    frame.channel(0) = out.frames[i];
    write_frame(dir / name, frame);
    gray.push_back(name);
  }
  nlohmann::ordered_json flows = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < out.flows.size(); ++i) {
    const std::string name = "flow/" + indexed("flow", i);
    write_flow(dir / name, out.flows[i]);
    flows.push_back(name);
  }
  write_poses(dir / "poses.json", out.poses);
  write_pose(dir / "begin_pose.json", out.poses.front());
  write_targets(dir / "targets.json", out.targets);

  nlohmann::ordered_json m;
  m["width"] = out.width;
  m["height"] = out.height;
  m["steps"] = out.flows.size();
  m["fps"] = config.fps;
  m["contrast"] = config.contrast;
  m["seed"] = config.seed;
  m["camera"] = {{"fx", camera.fx}, {"fy", camera.fy}, {"cx", camera.cx}, {"cy", camera.cy},
                 {"width", camera.width}, {"height", camera.height}};
  m["model"] = "model.json";
  m["events"] = "events.evt";
  m["event_count"] = out.events.size();
  m["frame_times"] = out.frame_times;
  m["gray_frames"] = std::move(gray);
  m["flows"] = std::move(flows);
  m["poses"] = "poses.json";
  m["begin_pose"] = "begin_pose.json";
  m["targets"] = "targets.json";
  write_json(dir / "manifest.json", m);
}

}  // namespace evpose
