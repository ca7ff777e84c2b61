#include "evpose/losses.hpp"

#include <cmath>
#include <string>

#include "evpose/error.hpp"

namespace evpose {

namespace {

void require_equal(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw Error(Errc::LengthMismatch, std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b));
}

// d(pi)/d(point) as a 2 x 3 matrix.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& cam, const Eigen::Vector3d& p) {
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx * iz, 0.0, -cam.fx * p.x() * iz * iz, 0.0, cam.fy * iz, -cam.fy * p.y() * iz * iz;
  return j;
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {trans, pose, joints3d, joints2d, flow})
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error(Errc::ConfigError, "loss weights must be finite and >= 0");
}

void SequenceTarget::validate(int joint_count) const {
  const std::size_t t = d.size();
  if (theta.size() != t || joints3d.size() != t || joints2d.size() != t)
    throw Error(Errc::LengthMismatch, "target fields disagree on the step count");
  for (std::size_t i = 0; i < t; ++i) {
    if (static_cast<int>(theta[i].size()) != joint_count || joints3d[i].rows() != joint_count ||
        joints2d[i].rows() != joint_count)
      throw Error(Errc::LengthMismatch, "target joint count differs from the model at step " + std::to_string(i));
  }
}

double loss_trans(std::span<const Eigen::Vector3d> pred, std::span<const Eigen::Vector3d> target) {
  require_equal(pred.size(), target.size(), "translation sequences");
  double total = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) total += (target[t] - pred[t]).squaredNorm();
  return total;
}

double loss_pose(std::span<const std::vector<Rot6d>> pred, std::span<const std::vector<Rot6d>> target) {
  require_equal(pred.size(), target.size(), "pose sequences");
  double total = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    require_equal(pred[t].size(), target[t].size(), "joint counts");
    for (std::size_t j = 0; j < pred[t].size(); ++j)
      total += geodesic_sq(rot6d_to_matrix(target[t][j]), rot6d_to_matrix(pred[t][j]));
  }
  return total;
}

double loss_joints3d(std::span<const Points3> pred, std::span<const Points3> target) {
  require_equal(pred.size(), target.size(), "3D joint sequences");
  double total = 0.0;
  for (std::size_t t = 0; t < pred.size(); ++t) {
    if (pred[t].rows() != target[t].rows()) throw Error(Errc::LengthMismatch, "3D joint counts differ");
    total += (target[t] - pred[t]).squaredNorm();
  }
  return total;
}

double loss_joints2d(std::span<const Points3> pred3d, std::span<const Points2> target, const Camera& camera) {
  require_equal(pred3d.size(), target.size(), "2D joint sequences");
  double total = 0.0;
  for (std::size_t t = 0; t < pred3d.size(); ++t) {
    if (pred3d[t].rows() != target[t].rows()) throw Error(Errc::LengthMismatch, "2D joint counts differ");
    total += (target[t] - project(camera, pred3d[t])).squaredNorm();
  }
  return total;
}

Points2 shape_flow(const Points3& prev_verts, const Points3& cur_verts, const Camera& camera) {
  if (prev_verts.rows() != cur_verts.rows()) throw Error(Errc::LengthMismatch, "vertex counts differ");
  return project(camera, cur_verts) - project(camera, prev_verts);
}

Points2 image_flow_at_vertices(const FlowField& flow, const Points2& prev_verts_2d) {
  Points2 out(prev_verts_2d.rows(), 2);
  for (Eigen::Index i = 0; i < prev_verts_2d.rows(); ++i) {
    out(i, 0) = sample_bilinear(flow.u, prev_verts_2d(i, 0), prev_verts_2d(i, 1)).value;
    out(i, 1) = sample_bilinear(flow.v, prev_verts_2d(i, 0), prev_verts_2d(i, 1)).value;
  }
  return out;
}

CoherenceResult flow_coherence(const FlowField& flow, const Points3& prev_verts, const Points3& cur_verts,
                               const Camera& camera, const std::vector<bool>& mask, const CoherenceOptions& options,
                               bool with_gradient) {
  const Eigen::Index v_count = prev_verts.rows();
  if (cur_verts.rows() != v_count) throw Error(Errc::LengthMismatch, "vertex counts differ");
  const std::vector<bool>& gate = options.frozen ? *options.frozen : mask;
  if (static_cast<Eigen::Index>(gate.size()) != v_count) throw Error(Errc::LengthMismatch, "mask length differs");

  CoherenceResult result;
  result.selected.assign(v_count, false);
  if (with_gradient) {
    result.grad_cur = Points3::Zero(v_count, 3);
    result.grad_prev = Points3::Zero(v_count, 3);
  }
  const double tau = options.tau;
  for (Eigen::Index i = 0; i < v_count; ++i) {
    if (!gate[i]) continue;
    const Eigen::Vector3d vp = prev_verts.row(i).transpose();
    const Eigen::Vector3d vc = cur_verts.row(i).transpose();
    const Eigen::Vector2d pp = project_point(camera, vp);
    const Eigen::Vector2d pc = project_point(camera, vc);
    const Sample su = sample_bilinear(flow.u, pp.x(), pp.y());
    const Sample sv = sample_bilinear(flow.v, pp.x(), pp.y());
    const Eigen::Vector2d a = pc - pp;
    const Eigen::Vector2d b(su.value, sv.value);
    const double na = a.norm(), nb = b.norm();

    bool floored = false;
    if (!options.frozen) {
      if (nb <= tau) continue;
      if (na <= tau) {
        if (options.floor == FloorMode::Exclude) continue;
        floored = true;
      }
    } else {
      if (nb == 0.0) continue;
      floored = options.floor == FloorMode::Clamp && na <= tau;
      if (!floored && na == 0.0) continue;
    }

    const double denom_a = floored ? tau : na;
    const double cosine = a.dot(b) / (denom_a * nb);
    result.value += 1.0 - cosine;
    result.selected[i] = true;
    ++result.counted;

    if (with_gradient) {
      Eigen::Vector2d dcos_da = b / (denom_a * nb);
      if (!floored) dcos_da -= cosine * a / (na * na);
      const Eigen::Vector2d dcos_db = a / (denom_a * nb) - cosine * b / (nb * nb);
      Eigen::Matrix2d jb;
      jb << su.dx, su.dy, sv.dx, sv.dy;
      const Eigen::Vector2d g_pc = -dcos_da;
      const Eigen::Vector2d g_pp = dcos_da - jb.transpose() * dcos_db;
      result.grad_cur.row(i) += (projection_jacobian(camera, vc).transpose() * g_pc).transpose();
      result.grad_prev.row(i) += (projection_jacobian(camera, vp).transpose() * g_pp).transpose();
    }
  }
  return result;
}

double loss_flow_coherence(const FlowField& flow, const Points3& prev_verts, const Points3& cur_verts,
                           const Camera& camera, const std::vector<bool>& mask, double tau) {
  CoherenceOptions options;
  options.tau = tau;
  return flow_coherence(flow, prev_verts, cur_verts, camera, mask, options).value;
}

StepLoss step_loss(const StepContext& ctx, const PoseState& prev, const PoseState& cur, const LossWeights& weights) {
  const BodyModel& model = *ctx.model;
  StepLoss loss;
  const ForwardResult now = forward(model, cur);

  if (ctx.target_d) loss.trans = (*ctx.target_d - cur.d).squaredNorm();
  if (ctx.target_theta) {
    if (ctx.target_theta->size() != cur.theta.size()) throw Error(Errc::LengthMismatch, "target joint count");
    for (std::size_t j = 0; j < cur.theta.size(); ++j)
      loss.pose += geodesic_sq(rot6d_to_matrix((*ctx.target_theta)[j]), rot6d_to_matrix(cur.theta[j]));
  }
  if (ctx.target_joints3d) loss.joints3d = (*ctx.target_joints3d - now.joints).squaredNorm();
  if (ctx.target_joints2d) loss.joints2d = (*ctx.target_joints2d - project(ctx.camera, now.joints)).squaredNorm();
  if (ctx.flow && weights.flow != 0.0) {
    const ForwardResult before = forward(model, prev);
    const std::vector<bool> mask = visible_vertices(model, before.vertices, ctx.camera);
    loss.flow = flow_coherence(*ctx.flow, before.vertices, now.vertices, ctx.camera, mask, ctx.coherence).value;
  }
  return loss;
}

LossBreakdown total_loss(std::span<const PoseState> states, const SequenceTarget* targets,
                         std::span<const FlowField> flows, const LossWeights& weights, const BodyModel& model,
                         const Camera& camera, const CoherenceOptions& coherence) {
  if (states.empty()) throw Error(Errc::LengthMismatch, "need at least the beginning state");
  const std::size_t steps = states.size() - 1;
  if (targets) require_equal(targets->steps(), steps, "targets vs states");
  if (!flows.empty()) require_equal(flows.size(), steps, "flows vs states");

  LossBreakdown out;
  out.steps.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    StepContext ctx;
    ctx.model = &model;
    ctx.camera = camera;
    ctx.flow = flows.empty() ? nullptr : &flows[t];
    ctx.coherence = coherence;
    if (targets) {
      ctx.target_d = &targets->d[t];
      ctx.target_theta = &targets->theta[t];
      ctx.target_joints3d = &targets->joints3d[t];
      ctx.target_joints2d = &targets->joints2d[t];
    }
    out.steps.push_back(step_loss(ctx, states[t], states[t + 1], weights));
    out.total += out.steps.back().weighted(weights);
  }
  return out;
}

}  // namespace evpose
