#pragma once

#include <optional>
#include <vector>

#include "evpose/body_model.hpp"
#include "evpose/flow.hpp"

namespace evpose {

struct LossWeights {
  double trans = 10.0;
  double pose = 20.0;
  double joints3d = 1.0;
  double joints2d = 10.0;
  double flow = 0.1;

  void validate() const;
};

/// Per-step ground truth for steps 1..T (step 0 is the known beginning state).
struct SequenceTarget {
  std::vector<Eigen::Vector3d> d;
  std::vector<std::vector<Rot6d>> theta;
  std::vector<Points3> joints3d;
  std::vector<Points2> joints2d;

  std::size_t steps() const { return d.size(); }
  void validate(int joint_count) const;
};

double loss_trans(std::span<const Eigen::Vector3d> pred, std::span<const Eigen::Vector3d> target);
double loss_pose(std::span<const std::vector<Rot6d>> pred, std::span<const std::vector<Rot6d>> target);
double loss_joints3d(std::span<const Points3> pred, std::span<const Points3> target);
/// Projects the predicted 3D joints before comparing with 2D targets.
double loss_joints2d(std::span<const Points3> pred3d, std::span<const Points2> target, const Camera& camera);

/// pi(cur) - pi(prev), per vertex.
Points2 shape_flow(const Points3& prev_verts, const Points3& cur_verts, const Camera& camera);

/// Flow sampled at projected previous-frame vertex positions.
Points2 image_flow_at_vertices(const FlowField& flow, const Points2& prev_verts_2d);

inline constexpr double kFlowMagnitudeFloor = 0.5;

/// How the magnitude floor tau is applied to the shape flow.
enum class FloorMode {
  /// Vertices with |F_shape| <= tau or |F_img| <= tau contribute nothing.
  Exclude,
  /// Only |F_img| <= tau excludes; |F_shape| is floored at tau in the
  /// cosine denominator so zero motion scores 1 instead of dropping out.
  Clamp,
};

struct CoherenceOptions {
  double tau = kFlowMagnitudeFloor;
  FloorMode floor = FloorMode::Exclude;
  /// When set, replaces the visibility mask and both magnitude tests.
  const std::vector<bool>* frozen = nullptr;
};

struct CoherenceResult {
  double value = 0.0;
  int counted = 0;
  std::vector<bool> selected;  // vertices that entered the sum
  // Gradients of value with respect to vertex positions (filled on request).
  Points3 grad_cur;
  Points3 grad_prev;
};

/// Sum over selected vertices of 1 - cos(F_shape, F_img).
CoherenceResult flow_coherence(const FlowField& flow, const Points3& prev_verts, const Points3& cur_verts,
                               const Camera& camera, const std::vector<bool>& mask,
                               const CoherenceOptions& options = {}, bool with_gradient = false);

double loss_flow_coherence(const FlowField& flow, const Points3& prev_verts, const Points3& cur_verts,
                           const Camera& camera, const std::vector<bool>& mask, double tau = kFlowMagnitudeFloor);

/// Unweighted value of every term for one step.
struct StepLoss {
  double trans = 0.0;
  double pose = 0.0;
  double joints3d = 0.0;
  double joints2d = 0.0;
  double flow = 0.0;
  double damping = 0.0;

  double weighted(const LossWeights& w, double damping_weight = 0.0) const {
    return w.trans * trans + w.pose * pose + w.joints3d * joints3d + w.joints2d * joints2d + w.flow * flow +
           damping_weight * damping;
  }
};

struct LossBreakdown {
  std::vector<StepLoss> steps;
  double total = 0.0;
};

/// Everything one step of the objective needs besides the two states.
struct StepContext {
  const BodyModel* model = nullptr;
  Camera camera;
  const FlowField* flow = nullptr;  // may be null when w_flow == 0
  // Supervision for this step; null members mean the term is absent.
  const Eigen::Vector3d* target_d = nullptr;
  const std::vector<Rot6d>* target_theta = nullptr;
  const Points3* target_joints3d = nullptr;
  const Points2* target_joints2d = nullptr;
  CoherenceOptions coherence;
};

/// Terms of one step given the previous and current states. Visibility for
/// the coherence term is evaluated on the previous-frame vertices.
StepLoss step_loss(const StepContext& ctx, const PoseState& prev, const PoseState& cur, const LossWeights& weights);

/// states[0] is the beginning state, states[t] is the estimate at step t.
LossBreakdown total_loss(std::span<const PoseState> states, const SequenceTarget* targets,
                         std::span<const FlowField> flows, const LossWeights& weights, const BodyModel& model,
                         const Camera& camera, const CoherenceOptions& coherence = {});

}  // namespace evpose
