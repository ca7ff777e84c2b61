#include "evpose/fitter.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

#include "evpose/autodiff.hpp"
#include "evpose/error.hpp"
#include "evpose/lbfgs.hpp"

namespace evpose {

namespace {

using AdVec3 = Vec3<AdScalar>;
using AdMat3 = Mat3<AdScalar>;

const Eigen::Matrix<double, 6, 1>& identity6() {
  static const Eigen::Matrix<double, 6, 1> id = (Eigen::Matrix<double, 6, 1>() << 1, 0, 0, 0, 1, 0).finished();
  return id;
}

double damping_value(const StepDelta& delta) {
  double total = 0.0;
  for (const Rot6d& r : delta.dtheta) {
    Eigen::Matrix<double, 6, 1> v;
    v << r.a, r.b;
    total += (v - identity6()).squaredNorm();
  }
  return total;
}

StepContext make_context(const SequenceProblem& problem, std::size_t step, const std::vector<bool>* frozen) {
  StepContext ctx;
  ctx.model = problem.model;
  ctx.camera = problem.camera;
  if (!problem.flows.empty()) ctx.flow = &problem.flows[step];
  if (problem.targets) {
    ctx.target_d = &problem.targets->d[step];
    ctx.target_theta = &problem.targets->theta[step];
    ctx.target_joints3d = &problem.targets->joints3d[step];
    ctx.target_joints2d = &problem.targets->joints2d[step];
  }
  ctx.coherence = problem.coherence;
  ctx.coherence.frozen = frozen;
  return ctx;
}

void add_derivatives(Eigen::VectorXd& grad, double scale, const AdScalar& x) {
  if (scale != 0.0 && x.derivatives().size() == grad.size()) grad += scale * x.derivatives();
}

// Pulls a per-vertex gradient back through linear blend skinning onto the
// joint transforms, then through their forward-mode derivatives.
void contract_vertex_gradient(const BodyModel& model, const Points3& rest, const Skeleton<AdScalar>& skeleton,
                              const AdVec3& d, const Points3& vertex_grad, double scale, Eigen::VectorXd& grad) {
  const int k_count = model.num_joints();
  std::vector<Eigen::Matrix3d> g_rot(k_count, Eigen::Matrix3d::Zero());
  std::vector<Eigen::Vector3d> g_off(k_count, Eigen::Vector3d::Zero());
  Eigen::Vector3d g_d = Eigen::Vector3d::Zero();
  for (Eigen::Index i = 0; i < vertex_grad.rows(); ++i) {
    const Eigen::Vector3d g = vertex_grad.row(i).transpose();
    if (g.isZero(0.0)) continue;
    const Eigen::RowVector3d r = rest.row(i);
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.skin_sparse, i); it; ++it) {
      g_rot[it.col()] += it.value() * g * r;
      g_off[it.col()] += it.value() * g;
    }
    g_d += g;
  }
  for (int k = 0; k < k_count; ++k) {
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) add_derivatives(grad, scale * g_rot[k](a, b), skeleton.rot[k](a, b));
      add_derivatives(grad, scale * g_off[k](a), skeleton.offset[k](a));
    }
  }
  for (int a = 0; a < 3; ++a) add_derivatives(grad, scale * g_d(a), d(a));
}

Skeleton<double> skeleton_values(const Skeleton<AdScalar>& s) {
  Skeleton<double> out;
  out.rot.resize(s.rot.size());
  out.joint.resize(s.joint.size());
  out.offset.resize(s.offset.size());
  for (std::size_t k = 0; k < s.rot.size(); ++k) {
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) out.rot[k](a, b) = s.rot[k](a, b).value();
      out.joint[k](a) = s.joint[k](a).value();
      out.offset[k](a) = s.offset[k](a).value();
    }
  }
  return out;
}

AdMat3 constant_matrix(const Mat3<double>& m, Eigen::Index size) {
  AdMat3 out;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) out(a, b) = ad_constant(m(a, b), size);
  return out;
}

AdScalar ad_square(const AdScalar& x) { return x * x; }

}  // namespace

void FitConfig::validate() const {
  weights.validate();
  if (max_iters < 1) throw Error(Errc::ConfigError, "max_iters must be >= 1");
  if (!(tolerance > 0.0)) throw Error(Errc::ConfigError, "tolerance must be > 0");
  if (!(initial_step > 0.0)) throw Error(Errc::ConfigError, "initial_step must be > 0");
  if (!(damping >= 0.0)) throw Error(Errc::ConfigError, "damping must be >= 0");
  if (!(tau >= 0.0)) throw Error(Errc::ConfigError, "tau must be >= 0");
  if (history < 1) throw Error(Errc::ConfigError, "history must be >= 1");
  if (refresh_every < 1) throw Error(Errc::ConfigError, "refresh_every must be >= 1");
}

StepDelta StepDelta::identity(int joint_count) {
  StepDelta d;
  d.dtheta.assign(joint_count, Rot6d::identity());
  return d;
}

int params_per_step(int joint_count) { return 6 * joint_count + 3; }

Eigen::VectorXd pack(std::span<const StepDelta> deltas) {
  if (deltas.empty()) return {};
  const int k_count = static_cast<int>(deltas.front().dtheta.size());
  const int per = params_per_step(k_count);
  Eigen::VectorXd out(per * static_cast<Eigen::Index>(deltas.size()));
  for (std::size_t s = 0; s < deltas.size(); ++s) {
    const Eigen::Index base = static_cast<Eigen::Index>(s) * per;
    for (int j = 0; j < k_count; ++j) {
      out.segment<3>(base + 6 * j) = deltas[s].dtheta[j].a;
      out.segment<3>(base + 6 * j + 3) = deltas[s].dtheta[j].b;
    }
    out.segment<3>(base + 6 * k_count) = deltas[s].dd;
  }
  return out;
}

std::vector<StepDelta> unpack(const Eigen::VectorXd& params, int joint_count) {
  const int per = params_per_step(joint_count);
  if (params.size() % per != 0) throw Error(Errc::DimensionMismatch, "parameter vector length");
  std::vector<StepDelta> out(params.size() / per);
  for (std::size_t s = 0; s < out.size(); ++s) {
    const Eigen::Index base = static_cast<Eigen::Index>(s) * per;
    out[s].dtheta.resize(joint_count);
    for (int j = 0; j < joint_count; ++j) {
      out[s].dtheta[j].a = params.segment<3>(base + 6 * j);
      out[s].dtheta[j].b = params.segment<3>(base + 6 * j + 3);
    }
    out[s].dd = params.segment<3>(base + 6 * joint_count);
  }
  return out;
}

PoseState apply_delta(const PoseState& prev, const StepDelta& delta) {
  if (delta.dtheta.size() != prev.theta.size()) throw Error(Errc::DimensionMismatch, "delta joint count");
  PoseState next;
  next.theta.resize(prev.theta.size());
  for (std::size_t j = 0; j < prev.theta.size(); ++j) next.theta[j] = compose_pose(delta.dtheta[j], prev.theta[j]);
  next.beta = prev.beta;
  next.d = prev.d + delta.dd;
  return next;
}

WindowValue window_objective(const SequenceProblem& problem, std::size_t first, const PoseState& prev,
                             const Eigen::VectorXd& params, const std::vector<std::vector<bool>>* frozen) {
  const int k_count = problem.model->num_joints();
  const std::vector<StepDelta> deltas = unpack(params, k_count);
  WindowValue out;
  PoseState before = prev;
  for (std::size_t s = 0; s < deltas.size(); ++s) {
    PoseState cur = apply_delta(before, deltas[s]);
    const StepContext ctx = make_context(problem, first + s, frozen ? &(*frozen)[s] : nullptr);
    StepLoss loss = step_loss(ctx, before, cur, problem.weights);
    loss.damping = damping_value(deltas[s]);
    out.total += loss.weighted(problem.weights, problem.damping);
    out.steps.push_back(loss);
    out.states.push_back(cur);
    before = std::move(cur);
  }
  return out;
}

Eigen::VectorXd window_gradient(const SequenceProblem& problem, std::size_t first, const PoseState& prev,
                                const Eigen::VectorXd& params, const std::vector<std::vector<bool>>* frozen) {
  const BodyModel& model = *problem.model;
  const LossWeights& w = problem.weights;
  const Camera& cam = problem.camera;
  const int k_count = model.num_joints();
  const int per = params_per_step(k_count);
  const Eigen::Index size = params.size();
  if (size % per != 0) throw Error(Errc::DimensionMismatch, "parameter vector length");
  const std::size_t n = static_cast<std::size_t>(size / per);

  const Points3 rest = shaped_template(model, prev.beta);
  const Points3 rest_joints = regress_joints3d(model, rest);

  std::vector<AdMat3> rot_before(k_count);
  for (int j = 0; j < k_count; ++j) rot_before[j] = constant_matrix(rot6d_to_matrix(prev.theta[j]), size);
  AdVec3 d_before;
  for (int a = 0; a < 3; ++a) d_before(a) = ad_constant(prev.d(a), size);

  const bool flow_active = w.flow != 0.0 && !problem.flows.empty();
  Points3 verts_before;
  if (flow_active) verts_before = forward(model, prev).vertices;
  Skeleton<AdScalar> skel_before;

  AdScalar objective = ad_constant(0.0, size);
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(size);

  for (std::size_t s = 0; s < n; ++s) {
    const Eigen::Index base = static_cast<Eigen::Index>(s) * per;
    const std::size_t step = first + s;

    std::vector<AdMat3> rot(k_count);
    AdScalar damping = ad_constant(0.0, size);
    for (int j = 0; j < k_count; ++j) {
      Rot6D<AdScalar> delta;
      for (int c = 0; c < 3; ++c) {
        delta.a(c) = ad_variable(params(base + 6 * j + c), size, base + 6 * j + c);
        delta.b(c) = ad_variable(params(base + 6 * j + 3 + c), size, base + 6 * j + 3 + c);
      }
      rot[j] = rot6d_to_matrix(delta) * rot_before[j];
      if (problem.damping != 0.0)
        for (int c = 0; c < 6; ++c)
          damping += ad_square((c < 3 ? delta.a(c) : delta.b(c - 3)) - identity6()(c));
    }
    AdVec3 d;
    for (int c = 0; c < 3; ++c) d(c) = d_before(c) + ad_variable(params(base + 6 * k_count + c), size, base + 6 * k_count + c);

    const Skeleton<AdScalar> skel = pose_skeleton<AdScalar>(rot, rest_joints, model.parents);

    if (problem.damping != 0.0) objective += problem.damping * damping;
    if (problem.targets) {
      const SequenceTarget& tg = *problem.targets;
      if (w.trans != 0.0)
        for (int c = 0; c < 3; ++c) objective += w.trans * ad_square(d(c) - tg.d[step](c));
      if (w.pose != 0.0)
        for (int j = 0; j < k_count; ++j) {
          const AdMat3 target = constant_matrix(rot6d_to_matrix(tg.theta[step][j]), size);
          objective += w.pose * geodesic_sq<AdScalar>(target, rot[j]);
        }
      if (w.joints3d != 0.0 || w.joints2d != 0.0) {
        for (int k = 0; k < k_count; ++k) {
          const AdVec3 joint = skel.joint[k] + d;
          if (w.joints3d != 0.0)
            for (int c = 0; c < 3; ++c) objective += w.joints3d * ad_square(joint(c) - tg.joints3d[step](k, c));
          if (w.joints2d != 0.0) {
            if (!(joint(2).value() > kMinDepth)) throw Error(Errc::BehindCamera, "joint behind the camera");
            const AdScalar u = cam.fx * joint(0) / joint(2) + cam.cx;
            const AdScalar v = cam.fy * joint(1) / joint(2) + cam.cy;
            objective += w.joints2d * (ad_square(u - tg.joints2d[step](k, 0)) + ad_square(v - tg.joints2d[step](k, 1)));
          }
        }
      }
    }

    if (flow_active) {
      Eigen::Vector3d d_val(d(0).value(), d(1).value(), d(2).value());
      const Points3 verts = skin_vertices(model, rest, skeleton_values(skel), d_val);
      const std::vector<bool> mask = visible_vertices(model, verts_before, cam);
      CoherenceOptions options = problem.coherence;
      options.frozen = frozen ? &(*frozen)[s] : nullptr;
      const CoherenceResult coh = flow_coherence(problem.flows[step], verts_before, verts, cam, mask, options, true);
      contract_vertex_gradient(model, rest, skel, d, coh.grad_cur, w.flow, grad);
      if (s > 0) contract_vertex_gradient(model, rest, skel_before, d_before, coh.grad_prev, w.flow, grad);
      verts_before = verts;
    }

    skel_before = skel;
    rot_before = std::move(rot);
    d_before = d;
  }
  if (objective.derivatives().size() == size) grad += objective.derivatives();
  return grad;
}

std::vector<std::vector<bool>> coherence_selection(const SequenceProblem& problem, std::size_t first,
                                                   const PoseState& prev, const Eigen::VectorXd& params,
                                                   double margin) {
  const BodyModel& model = *problem.model;
  const std::vector<StepDelta> deltas = unpack(params, model.num_joints());
  std::vector<std::vector<bool>> out;
  PoseState before = prev;
  Points3 verts_before = forward(model, prev).vertices;
  for (std::size_t s = 0; s < deltas.size(); ++s) {
    PoseState cur = apply_delta(before, deltas[s]);
    const Points3 verts = forward(model, cur).vertices;
    const std::vector<bool> mask = visible_vertices(model, verts_before, problem.camera);
    std::vector<bool> selected(verts.rows(), false);
    if (!problem.flows.empty()) {
      CoherenceOptions options = problem.coherence;
      options.frozen = nullptr;
      selected = flow_coherence(problem.flows[first + s], verts_before, verts, problem.camera, mask, options).selected;
      const Points2 px = project(problem.camera, verts_before);
      const Points2 shape = project(problem.camera, verts) - px;
      for (Eigen::Index i = 0; i < px.rows(); ++i) {
        for (int c = 0; c < 2; ++c) {
          const double f = px(i, c) - std::floor(px(i, c));
          if (std::min(f, 1.0 - f) < margin) selected[i] = false;
        }
        // The magnitude floor is a kink of the clamped cosine.
        if (std::abs(shape.row(i).norm() - problem.coherence.tau) < margin) selected[i] = false;
      }
    }
    out.push_back(std::move(selected));
    before = std::move(cur);
    verts_before = verts;
  }
  return out;
}

namespace {

struct IntervalSolve {
  Eigen::VectorXd x;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> trace;
};

// Gauge-free chart around an orthonormal 6D point (a, b): a small rotation w
// moves it to (a + w x a, b + w x b). Translation enters unchanged.
struct Chart {
  Eigen::VectorXd origin;
  Eigen::MatrixXd basis;  // full params = origin + basis * z

  Chart(const Eigen::VectorXd& x, int joint_count) : origin(x) {
    basis = Eigen::MatrixXd::Zero(x.size(), 3 * joint_count + 3);
    for (int j = 0; j < joint_count; ++j) {
      Rot6d r{x.segment<3>(6 * j), x.segment<3>(6 * j + 3)};
      const Mat3<double> m = rot6d_to_matrix(r);
      origin.segment<3>(6 * j) = m.col(0);
      origin.segment<3>(6 * j + 3) = m.col(1);
      for (int i = 0; i < 3; ++i) {
        const Eigen::Vector3d e = Eigen::Vector3d::Unit(i);
        basis.block<3, 1>(6 * j, 3 * j + i) = e.cross(m.col(0));
        basis.block<3, 1>(6 * j + 3, 3 * j + i) = e.cross(m.col(1));
      }
    }
    basis.bottomRightCorner<3, 3>().setIdentity();
  }
  Eigen::VectorXd lift(const Eigen::VectorXd& z) const { return origin + basis * z; }
};

// Forward differences of the exact gradient, symmetrized. Eigenvalues are
// taken in magnitude and floored relative to the largest.
template <typename Gradient>
Eigen::MatrixXd inverse_hessian(const Gradient& gradient, const Eigen::VectorXd& z) {
  const Eigen::Index n = z.size();
  const Eigen::VectorXd g0 = gradient(z);
  Eigen::MatrixXd h(n, n);
  Eigen::VectorXd probe = z;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double step = 1e-6 * std::max(1.0, std::abs(z(i)));
    probe(i) = z(i) + step;
    h.col(i) = (gradient(probe) - g0) / step;
    probe(i) = z(i);
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (h + h.transpose()));
  Eigen::VectorXd lambda = eig.eigenvalues().cwiseAbs();
  const double floor = std::max(1e-8 * lambda.maxCoeff(), 1e-12);
  lambda = lambda.cwiseMax(floor).cwiseInverse();
  return eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose();
}

double chart_value(const SequenceProblem& problem, std::size_t step, const PoseState& prev,
                   const Eigen::VectorXd& params) {
  try {
    return window_objective(problem, step, prev, params).total;
  } catch (const Error& e) {
    // Degenerate 6D candidates and vertices behind the camera are rejected
    // by the line search like any other non-improving point.
    if (e.code() == Errc::DegenerateInput || e.code() == Errc::BehindCamera)
      return std::numeric_limits<double>::infinity();
    throw;
  }
}

// L-BFGS in a chart re-centered every `refresh_every` iterations, each time
// with a fresh Hessian-based initial inverse when preconditioning is on.
IntervalSolve minimize_interval(const SequenceProblem& problem, std::size_t step, const PoseState& prev,
                                Eigen::VectorXd x, const FitConfig& config) {
  const int k_count = problem.model->num_joints();
  IntervalSolve out;
  out.trace.push_back(chart_value(problem, step, prev, x));
  if (!std::isfinite(out.trace.front())) throw Error(Errc::Diverged, "non-finite objective at interval start");

  double f = out.trace.front();
  while (out.iterations < config.max_iters) {
    const Chart chart(x, k_count);
    auto value = [&](const Eigen::VectorXd& z) { return chart_value(problem, step, prev, chart.lift(z)); };
    auto gradient = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
      return chart.basis.transpose() * window_gradient(problem, step, prev, chart.lift(z));
    };
    LbfgsOptions opt;
    opt.max_iters = config.max_iters - out.iterations;
    opt.history = config.history;
    opt.first_step = config.initial_step;
    opt.tolerance = config.tolerance;
    Eigen::VectorXd z = Eigen::VectorXd::Zero(chart.basis.cols());
    if (config.precondition) {
      opt.max_iters = std::min(opt.max_iters, config.refresh_every);
      const Eigen::MatrixXd inverse = inverse_hessian(gradient, z);
      opt.precondition = [inverse](const Eigen::VectorXd& v) -> Eigen::VectorXd { return inverse * v; };
    }
    const LbfgsResult r = lbfgs_minimize(z, value, gradient, opt, [&](int, double v) { out.trace.push_back(v); });
    if (!std::isfinite(r.value)) throw Error(Errc::Diverged, "non-finite objective");
    x = chart.lift(z);
    f = r.value;
    out.iterations += r.iterations;
    if (r.converged || r.iterations == 0) {
      out.converged = true;
      break;
    }
  }
  out.x = std::move(x);
  out.objective = f;
  return out;
}

}  // namespace

FitResult fit_sequence(const PoseState& begin, std::span<const EventFrame> frames, std::span<const FlowField> flows,
                       const SequenceTarget* targets, const BodyModel& model, const Camera& camera,
                       const FitConfig& config) {
  config.validate();
  const int k_count = model.num_joints();
  if (static_cast<int>(begin.theta.size()) != k_count || begin.beta.size() != model.num_shapes())
    throw Error(Errc::DimensionMismatch, "beginning pose does not match the model");
  const std::size_t steps = flows.size();
  if (steps == 0) throw Error(Errc::LengthMismatch, "no intervals to fit");
  if (!frames.empty()) {
    if (frames.size() != steps) throw Error(Errc::LengthMismatch, "frame and flow counts differ");
    for (std::size_t i = 0; i < steps; ++i)
      if (frames[i].height() != flows[i].height() || frames[i].width() != flows[i].width())
        throw Error(Errc::DimensionMismatch, "event frame and flow rasters differ");
  }
  if (targets) {
    targets->validate(k_count);
    if (targets->steps() != steps) throw Error(Errc::LengthMismatch, "target and flow counts differ");
  }

  SequenceProblem problem;
  problem.model = &model;
  problem.camera = camera;
  problem.flows = flows;
  problem.targets = targets;
  problem.coherence.tau = config.tau;
  if (targets) {
    problem.weights = config.weights;
    problem.coherence.floor = FloorMode::Exclude;
  } else {
    problem.weights = LossWeights{0.0, 0.0, 0.0, 0.0, config.weights.flow};
    problem.damping = config.damping;
    problem.coherence.floor = FloorMode::Clamp;
  }

  FitResult result;
  PoseState prev = begin;
  const StepDelta cold = StepDelta::identity(k_count);
  for (std::size_t i = 0; i < steps; ++i) {
    Eigen::VectorXd x0 = pack(std::span<const StepDelta>(&cold, 1));
    if (config.warm_start && !result.deltas.empty()) {
      const Eigen::VectorXd warm = pack(std::span<const StepDelta>(&result.deltas.back(), 1));
      // Keep the warm start only when it is no worse than the cold start.
      const double f_warm = window_objective(problem, i, prev, warm).total;
      const double f_cold = window_objective(problem, i, prev, x0).total;
      if (f_warm <= f_cold) x0 = warm;
    }
    IntervalSolve solve = minimize_interval(problem, i, prev, std::move(x0), config);

    StepDelta delta = unpack(solve.x, k_count).front();
    const WindowValue final_value = window_objective(problem, i, prev, solve.x);
    result.states.push_back(final_value.states.front());
    result.deltas.push_back(std::move(delta));
    result.losses.push_back(final_value.steps.front());
    result.objectives.push_back(final_value.total);
    result.iterations.push_back(solve.iterations);
    result.converged.push_back(solve.converged);
    result.traces.push_back(std::move(solve.trace));
    prev = result.states.back();
  }
  return result;
}

std::string term_name(LossTerm term) {
  switch (term) {
    case LossTerm::Trans: return "trans";
    case LossTerm::Pose: return "pose";
    case LossTerm::Joints3d: return "joints3d";
    case LossTerm::Joints2d: return "joints2d";
    case LossTerm::Flow: return "flow";
    case LossTerm::Damping: return "damping";
  }
  return "unknown";
}

}  // namespace evpose
