#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "evpose/losses.hpp"

namespace evpose {

struct FitConfig {
  LossWeights weights;
  int max_iters = 500;        // per interval
  double initial_step = 0.05; // max-norm length of the first trial step
  double tolerance = 1e-12;   // relative objective decrease that ends an interval
  int steps = 16;
  unsigned seed = 0;
  bool warm_start = true;
  double damping = 1e-3;      // unsupervised mode only
  double tau = kFlowMagnitudeFloor;
  int history = 10;           // L-BFGS memory
  bool precondition = true;   // finite-difference Hessian as the initial L-BFGS inverse
  int refresh_every = 25;     // iterations between Hessian refreshes

  void validate() const;
};

/// Per-interval unknowns: one 6D rotation delta per joint and a translation delta.
struct StepDelta {
  std::vector<Rot6d> dtheta;
  Eigen::Vector3d dd = Eigen::Vector3d::Zero();

  static StepDelta identity(int joint_count);
};

int params_per_step(int joint_count);
Eigen::VectorXd pack(std::span<const StepDelta> deltas);
std::vector<StepDelta> unpack(const Eigen::VectorXd& params, int joint_count);

/// R(delta) * R(prev) per joint, d_prev + dd.
PoseState apply_delta(const PoseState& prev, const StepDelta& delta);

/// Everything the sequence objective depends on besides the deltas.
struct SequenceProblem {
  const BodyModel* model = nullptr;
  Camera camera;
  std::span<const FlowField> flows;        // one per step, may be empty
  const SequenceTarget* targets = nullptr; // null in unsupervised mode
  LossWeights weights;
  double damping = 0.0;                    // weight of sum |dtheta - identity|^2
  CoherenceOptions coherence;
};

struct WindowValue {
  double total = 0.0;
  std::vector<StepLoss> steps;
  std::vector<PoseState> states;  // estimates at the window steps
};

/// Objective over steps [first, first + n) given the state before `first` and
/// the packed deltas of those n steps. `frozen`, when given, fixes the set of
/// vertices counted by the coherence term at each window step.
WindowValue window_objective(const SequenceProblem& problem, std::size_t first, const PoseState& prev,
                             const Eigen::VectorXd& params,
                             const std::vector<std::vector<bool>>* frozen = nullptr);

/// Exact gradient of window_objective(...).total with respect to params:
/// forward-mode autodiff through rotation composition and kinematics, and
/// analytic adjoints through skinning, projection and bilinear sampling.
Eigen::VectorXd window_gradient(const SequenceProblem& problem, std::size_t first, const PoseState& prev,
                                const Eigen::VectorXd& params,
                                const std::vector<std::vector<bool>>* frozen = nullptr);

/// Coherence vertex sets at params, with every vertex whose bilinear sample
/// lies within `margin` px of a cell boundary removed.
std::vector<std::vector<bool>> coherence_selection(const SequenceProblem& problem, std::size_t first,
                                                   const PoseState& prev, const Eigen::VectorXd& params,
                                                   double margin);

struct FitResult {
  std::vector<PoseState> states;  // estimates at steps 1..T
  std::vector<StepDelta> deltas;
  std::vector<StepLoss> losses;
  std::vector<double> objectives;
  std::vector<int> iterations;
  std::vector<bool> converged;
  std::vector<std::vector<double>> traces;  // per-interval objective trace
};

/// Sequential per-interval fit. With targets, all five weighted terms are
/// active; without, only the coherence term (floored) plus damping.
/// `frames` must match `flows` in count and raster; they do not enter the objective.
FitResult fit_sequence(const PoseState& begin, std::span<const EventFrame> frames, std::span<const FlowField> flows,
                       const SequenceTarget* targets, const BodyModel& model, const Camera& camera,
                       const FitConfig& config);

enum class LossTerm { Trans, Pose, Joints3d, Joints2d, Flow, Damping };
inline constexpr std::array<LossTerm, 6> kAllTerms = {LossTerm::Trans,    LossTerm::Pose, LossTerm::Joints3d,
                                                      LossTerm::Joints2d, LossTerm::Flow, LossTerm::Damping};
std::string term_name(LossTerm term);

struct GradientCheckOptions {
  int steps = 2;            // window length of each random instance
  double step_size = 1e-5;  // central difference h
  double threshold = 1e-3;
  double boundary_margin = 1e-2;
  double corruption = 0.0;  // test hook: added to one analytic component
};

struct GradientCheckReport {
  int trials = 0;
  std::vector<std::pair<LossTerm, double>> max_rel_error;  // per term
  int min_counted_vertices = 0;
  bool passed = true;
};

/// Central-difference comparison on random mini-body instances. Relative
/// error is |g_analytic - g_fd|_inf / max(|g_fd|_inf, 1e-10).
GradientCheckReport check_gradients(unsigned seed, int n_trials, const GradientCheckOptions& options = {});

}  // namespace evpose
