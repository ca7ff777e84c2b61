#pragma once

#include <cmath>
#include <filesystem>
#include <span>
#include <vector>

#include "evpose/events.hpp"
#include "evpose/types.hpp"

namespace evpose {

/// Dense per-pixel motion in pixels per interval; u rightward, v downward.
struct FlowField {
  Image u;
  Image v;

  FlowField() = default;
  FlowField(int height, int width) : u(Image::Zero(height, width)), v(Image::Zero(height, width)) {}

  int height() const { return static_cast<int>(u.rows()); }
  int width() const { return static_cast<int>(u.cols()); }
};

inline constexpr double kCharbonnierEps = 1e-3;

inline double charbonnier(double x, double eps = kCharbonnierEps) { return std::sqrt(x * x + eps * eps); }
inline double charbonnier_derivative(double x, double eps = kCharbonnierEps) {
  return x / std::sqrt(x * x + eps * eps);
}

/// Bilinear value and spatial derivatives at one point.
struct Sample {
  double value = 0.0;
  double dx = 0.0;
  double dy = 0.0;
};

/// Bilinear interpolation with clamp-to-border; integer coordinates return
/// exact grid values. Derivatives are zero where the clamp is active.
Sample sample_bilinear(const Image& grid, double x, double y);

/// Samples several channels at N points (x, y per row); result is N x C.
Eigen::MatrixXd bilinear_sample(std::span<const Image> channels, const Points2& points);
Eigen::VectorXd bilinear_sample(const Image& grid, const Points2& points);

/// output(x, y) = second(x + u, y + v).
Image warp(const Image& second, const FlowField& flow);

double photometric_loss(const Image& first, const Image& second, const FlowField& flow,
                        double eps = kCharbonnierEps);

/// Ordered 4-neighborhood pairs: every unordered edge contributes twice.
double smoothness_loss(const FlowField& flow, double eps = kCharbonnierEps);

struct FlowObjective {
  double photometric = 0.0;
  double smoothness = 0.0;
  double total = 0.0;  // photometric + lambda * smoothness
};

/// Objective and (optionally) its gradient with respect to every flow component.
FlowObjective flow_objective(const Image& first, const Image& second, const FlowField& flow, double eps,
                             double lambda_smooth, FlowField* gradient = nullptr);

struct FlowSolverConfig {
  double eps = kCharbonnierEps;
  double lambda_smooth = 0.5;
  int iterations = 200;  // per pyramid level
  double step = 1.0;     // max-norm length of the first trial step
  int pyramid_levels = 3;
  double tolerance = 1e-9;  // relative objective decrease that ends a level
};

struct FlowTraceEntry {
  int level = 0;  // 0 = finest
  int iteration = 0;
  double objective = 0.0;
};

struct FlowSolution {
  FlowField flow;
  std::vector<FlowTraceEntry> trace;
};

/// Coarse-to-fine minimization of photometric + lambda * smoothness directly
/// over the flow field (L-BFGS with Armijo backtracking at each level).
FlowSolution solve_flow(const Image& first, const Image& second, const FlowSolverConfig& config = {});

/// Channel sum of an event frame scaled to [0, 1] by its maximum.
Image pseudo_intensity(const EventFrame& frame);

/// Flow between consecutive event frames via their pseudo-intensities.
FlowSolution flow_from_events(const EventFrame& previous, const EventFrame& current,
                              const FlowSolverConfig& config = {});

/// 2x2 box downsampling (odd trailing rows/cols are dropped).
Image downsample(const Image& image);

/// Flat float32 H*W*2 (u plane then v plane) + JSON sidecar {height, width}.
void write_flow(const std::filesystem::path& bin_path, const FlowField& flow);
FlowField read_flow(const std::filesystem::path& bin_path);

}  // namespace evpose
