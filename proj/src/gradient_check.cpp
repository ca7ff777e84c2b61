#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "evpose/fitter.hpp"

namespace evpose {

namespace {

struct Instance {
  PoseState begin;
  Eigen::VectorXd params;
  std::vector<FlowField> flows;
  SequenceTarget targets;
  FloorMode floor = FloorMode::Exclude;
};

class Random {
 public:
  explicit Random(unsigned seed) : engine_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  Eigen::Vector3d vec3(double scale) { return {uniform(-scale, scale), uniform(-scale, scale), uniform(-scale, scale)}; }
  Mat3<double> rotation(double max_angle) {
    const Eigen::Vector3d axis = vec3(1.0).normalized();
    return axis_angle_to_matrix(axis * uniform(0.0, max_angle));
  }

 private:
  std::mt19937_64 engine_;
};

FlowField smooth_flow(Random& rng, const Camera& cam) {
  FlowField f(cam.height, cam.width);
  const double two_pi = 2.0 * std::numbers::pi;
  double ku[2], kv[2], phase[2], amp[2], mean[2];
  for (int c = 0; c < 2; ++c) {
    ku[c] = rng.uniform(-1.0, 1.0) * two_pi / 40.0;
    kv[c] = rng.uniform(-1.0, 1.0) * two_pi / 40.0;
    phase[c] = rng.uniform(0.0, two_pi);
    amp[c] = rng.uniform(1.0, 3.0);
    mean[c] = rng.uniform(-1.5, 1.5);
  }
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      f.u(y, x) = mean[0] + amp[0] * std::sin(ku[0] * x + kv[0] * y + phase[0]);
      f.v(y, x) = mean[1] + amp[1] * std::sin(ku[1] * x + kv[1] * y + phase[1]);
    }
  }
  return f;
}

Instance random_instance(Random& rng, const BodyModel& model, const Camera& cam, int steps) {
  const int k_count = model.num_joints();
  Instance inst;
  inst.begin = PoseState::rest(model);
  for (int i = 0; i < model.num_shapes(); ++i) inst.begin.beta(i) = rng.uniform(-1.0, 1.0);
  const Mat3<double> upright = axis_angle_to_matrix(Eigen::Vector3d(std::numbers::pi, 0.0, 0.0));
  inst.begin.theta[0] = matrix_to_rot6d(Mat3<double>(rng.rotation(0.3) * upright));
  for (int j = 1; j < k_count; ++j) inst.begin.theta[j] = matrix_to_rot6d(rng.rotation(0.4));
  inst.begin.d = Eigen::Vector3d(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(3.3, 3.7));

  // Deltas deliberately off the 6D manifold (scaled, sheared columns).
  std::vector<StepDelta> deltas(steps, StepDelta::identity(k_count));
  for (StepDelta& delta : deltas) {
    for (Rot6d& r : delta.dtheta) {
      r.a += rng.vec3(0.12);
      r.b += rng.vec3(0.12);
    }
    delta.dd = rng.vec3(0.05);
  }
  inst.params = pack(deltas);
  inst.floor = rng.uniform(0.0, 1.0) < 0.5 ? FloorMode::Exclude : FloorMode::Clamp;

  PoseState state = inst.begin;
  for (int s = 0; s < steps; ++s) {
    state = apply_delta(state, deltas[s]);
    const ForwardResult fk = forward(model, state);
    inst.flows.push_back(smooth_flow(rng, cam));
    inst.targets.d.push_back(state.d + rng.vec3(0.05));
    std::vector<Rot6d> theta(k_count);
    for (int j = 0; j < k_count; ++j)
      theta[j] = matrix_to_rot6d(Mat3<double>(rng.rotation(0.5) * rot6d_to_matrix(state.theta[j])));
    inst.targets.theta.push_back(std::move(theta));
    Points3 j3 = fk.joints;
    for (Eigen::Index k = 0; k < j3.rows(); ++k) j3.row(k) += rng.vec3(0.05).transpose();
    inst.targets.joints3d.push_back(j3);
    Points2 j2 = project(cam, fk.joints);
    for (Eigen::Index k = 0; k < j2.rows(); ++k) j2.row(k) += Eigen::RowVector2d(rng.uniform(-3, 3), rng.uniform(-3, 3));
    inst.targets.joints2d.push_back(j2);
  }
  return inst;
}

LossWeights one_hot(LossTerm term) {
  LossWeights w{0.0, 0.0, 0.0, 0.0, 0.0};
  switch (term) {
    case LossTerm::Trans: w.trans = 1.0; break;
    case LossTerm::Pose: w.pose = 1.0; break;
    case LossTerm::Joints3d: w.joints3d = 1.0; break;
    case LossTerm::Joints2d: w.joints2d = 1.0; break;
    case LossTerm::Flow: w.flow = 1.0; break;
    case LossTerm::Damping: break;
  }
  return w;
}

}  // namespace

GradientCheckReport check_gradients(unsigned seed, int n_trials, const GradientCheckOptions& options) {
  GradientCheckReport report;
  if (n_trials <= 0) return report;

  static const BodyModel model = make_mini_body(0);
  const Camera cam;
  Random rng(seed);
  for (LossTerm term : kAllTerms) report.max_rel_error.emplace_back(term, 0.0);
  report.min_counted_vertices = std::numeric_limits<int>::max();

  const double h = options.step_size;
  for (int trial = 0; trial < n_trials; ++trial) {
    const Instance inst = random_instance(rng, model, cam, options.steps);
    for (std::size_t t = 0; t < kAllTerms.size(); ++t) {
      const LossTerm term = kAllTerms[t];
      SequenceProblem problem;
      problem.model = &model;
      problem.camera = cam;
      problem.flows = inst.flows;
      problem.targets = &inst.targets;
      problem.weights = one_hot(term);
      problem.damping = term == LossTerm::Damping ? 1.0 : 0.0;
      problem.coherence.floor = inst.floor;

      std::vector<std::vector<bool>> frozen;
      const std::vector<std::vector<bool>>* frozen_ptr = nullptr;
      if (term == LossTerm::Flow) {
        frozen = coherence_selection(problem, 0, inst.begin, inst.params, options.boundary_margin);
        for (const auto& sel : frozen)
          report.min_counted_vertices =
              std::min(report.min_counted_vertices, static_cast<int>(std::count(sel.begin(), sel.end(), true)));
        frozen_ptr = &frozen;
      }

      Eigen::VectorXd analytic = window_gradient(problem, 0, inst.begin, inst.params, frozen_ptr);
      if (options.corruption != 0.0) analytic(0) += options.corruption;

      Eigen::VectorXd numeric(inst.params.size());
      Eigen::VectorXd x = inst.params;
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double x0 = x(i);
        x(i) = x0 + h;
        const double fp = window_objective(problem, 0, inst.begin, x, frozen_ptr).total;
        x(i) = x0 - h;
        const double fm = window_objective(problem, 0, inst.begin, x, frozen_ptr).total;
        x(i) = x0;
        numeric(i) = (fp - fm) / (2.0 * h);
      }
      const double rel = (analytic - numeric).lpNorm<Eigen::Infinity>() /
                         std::max(numeric.lpNorm<Eigen::Infinity>(), 1e-10);
      report.max_rel_error[t].second = std::max(report.max_rel_error[t].second, rel);
    }
    ++report.trials;
  }
  for (const auto& [term, err] : report.max_rel_error)
    if (!(err <= options.threshold)) report.passed = false;
  return report;
}

}  // namespace evpose
