#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evpose/body_model.hpp"
#include "evpose/events.hpp"
#include "evpose/flow.hpp"
#include "evpose/losses.hpp"

namespace evpose {

/// Per-pixel coverage of a triangle mesh, pixel centers at integer coordinates.
struct Raster {
  int height = 0;
  int width = 0;
  std::vector<int> face;                  // -1 = background
  std::vector<Eigen::Vector3d> bary;      // screen-space barycentrics of `face`
  std::vector<double> depth;

  int at(int y, int x) const { return face[static_cast<std::size_t>(y) * width + x]; }
};

/// Depth-buffered coverage. Triangles with a vertex at z <= kMinDepth are skipped.
Raster rasterize(const Faces& faces, const Points3& vertices, const Camera& camera);

inline constexpr double kBackground = 0.2;

struct RenderOptions {
  int supersample = 2;
  Eigen::Vector3d light = Eigen::Vector3d(0.4, -0.6, -1.0);  // toward the light, camera frame
  double ambient = 0.3;
  std::vector<double> albedo;  // per vertex; empty = 1
};

/// Diffuse-shaded gray image, background kBackground. Throws BehindCamera
/// when no vertex lies in front of the camera.
Image render_intensity(const BodyModel& model, const PoseState& pose, const Camera& camera,
                       const RenderOptions& options = {});
Image render_intensity(const Faces& faces, const Points3& vertices, const Camera& camera,
                       const RenderOptions& options = {});

/// Log-intensity threshold crossings between consecutive frames, with
/// timestamps linearly interpolated inside each frame interval and clamped to
/// [times[k], times[k+1] - 1]. Sorted by (t, y, x, p).
std::vector<Event> events_from_frames(std::span<const Image> frames, std::span<const std::uint64_t> times,
                                      double contrast, double log_eps = 1e-4);

/// Per-pixel barycentric interpolation of the vertex shape flow over the
/// triangles visible in the previous pose; background zero.
FlowField ground_truth_flow(const BodyModel& model, const PoseState& prev, const PoseState& cur,
                            const Camera& camera);

struct SimConfig {
  double contrast = 0.15;
  double fps = 30.0;
  int steps = 16;     // intervals; steps + 1 frames
  int substeps = 4;   // rendered sub-frames per interval for event timing
  std::vector<PoseState> keyframes;
  unsigned seed = 0;
  double log_eps = 1e-4;

  void validate() const;
};

/// Named keyframe scripts: "arm_raise", "static", "turn".
std::vector<PoseState> motion_script(const std::string& name, const BodyModel& model);

/// Upright body centered in front of the default camera.
PoseState standing_pose(const BodyModel& model);

/// Keyframe interpolation at u in [0, 1]: slerp per joint, linear in d and beta.
PoseState interpolate_keyframes(std::span<const PoseState> keyframes, double u);

/// Microsecond frame times, i * 1e6 / fps rounded.
std::vector<std::uint64_t> frame_times(int steps, double fps);

struct SimOutput {
  int width = 0;
  int height = 0;
  std::vector<Event> events;
  std::vector<std::uint64_t> frame_times;  // steps + 1
  std::vector<Image> frames;               // gray frames at frame_times
  std::vector<FlowField> flows;            // steps
  std::vector<PoseState> poses;            // steps + 1, poses[0] = beginning state
  std::vector<Points3> vertices;           // steps + 1
  SequenceTarget targets;                  // steps 1..T
};

std::vector<double> vertex_albedo(int vertex_count, unsigned seed);

SimOutput simulate(const SimConfig& config, const BodyModel& model, const Camera& camera);

/// Writes events.evt, gray/ and flow/ binaries, pose and target JSON, the
/// model, and manifest.json into `dir`.
void write_simulation(const std::filesystem::path& dir, const SimOutput& out, const BodyModel& model,
                      const Camera& camera, const SimConfig& config);

}  // namespace evpose
