#pragma once

#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace evpose {

struct LbfgsOptions {
  int max_iters = 500;
  int history = 10;
  double armijo = 1e-4;
  double shrink = 0.5;
  int max_shrinks = 60;
  double first_step = 1.0;  // max-norm length of the first trial step
  double tolerance = 1e-12; // stop when the relative decrease falls below this
  // Initial inverse Hessian applied to a vector. When set, it replaces the
  // scalar initial scaling and the first trial step is the full step.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> precondition;
};

struct LbfgsResult {
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Limited-memory BFGS with Armijo backtracking. Every accepted iterate
/// strictly satisfies the sufficient-decrease condition, so the sequence of
/// values passed to `on_accept` is non-increasing. `value` may return +inf to
/// reject a trial point; `gradient` is only called at accepted points.
inline LbfgsResult lbfgs_minimize(Eigen::VectorXd& x, const std::function<double(const Eigen::VectorXd&)>& value,
                                  const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& gradient,
                                  const LbfgsOptions& opt,
                                  const std::function<void(int, double)>& on_accept = nullptr) {
  LbfgsResult out;
  double f = value(x);
  out.value = f;
  if (!std::isfinite(f)) return out;
  Eigen::VectorXd g = gradient(x);

  std::deque<std::pair<Eigen::VectorXd, Eigen::VectorXd>> memory;
  bool steepest = false;
  for (int it = 1; it <= opt.max_iters; ++it) {
    if (g.lpNorm<Eigen::Infinity>() <= 1e-14 * std::max(1.0, std::abs(f))) {
      out.converged = true;
      break;
    }

    // Fall back to plain steepest descent when the model direction fails.
    const bool use_model = !steepest;
    Eigen::VectorXd q = g;
    std::vector<double> alphas(memory.size());
    if (use_model) {
      for (std::size_t i = memory.size(); i-- > 0;) {
        const auto& [s, y] = memory[i];
        alphas[i] = s.dot(q) / y.dot(s);
        q -= alphas[i] * y;
      }
      if (opt.precondition) {
        q = opt.precondition(q);
      } else if (!memory.empty()) {
        const auto& [s, y] = memory.back();
        q *= s.dot(y) / y.dot(y);
      }
      for (std::size_t i = 0; i < memory.size(); ++i) {
        const auto& [s, y] = memory[i];
        q += (alphas[i] - y.dot(q) / y.dot(s)) * s;
      }
    }
    Eigen::VectorXd dir = -q;
    double slope = g.dot(dir);
    bool plain = !use_model || (memory.empty() && !opt.precondition);
    if (!(slope < 0.0)) {
      memory.clear();
      dir = -g;
      slope = -g.squaredNorm();
      plain = true;
    }

    double alpha = plain ? opt.first_step / dir.lpNorm<Eigen::Infinity>() : 1.0;
    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = f;
    for (int k = 0; k < opt.max_shrinks; ++k) {
      x_new = x + alpha * dir;
      f_new = value(x_new);
      if (std::isfinite(f_new) && f_new <= f + opt.armijo * alpha * slope) {
        accepted = true;
        break;
      }
      alpha *= opt.shrink;
    }
    if (!accepted) {
      if (!plain) {
        memory.clear();
        steepest = true;
        continue;
      }
      out.converged = true;  // no representable descent along -g
      break;
    }
    steepest = false;

    Eigen::VectorXd g_new = gradient(x_new);
    Eigen::VectorXd s = x_new - x;
    Eigen::VectorXd y = g_new - g;
    if (s.dot(y) > 1e-16 * s.squaredNorm()) {
      memory.emplace_back(std::move(s), std::move(y));
      if (static_cast<int>(memory.size()) > opt.history) memory.pop_front();
    }
    const double decrease = f - f_new;
    x = std::move(x_new);
    g = std::move(g_new);
    f = f_new;
    out.value = f;
    out.iterations = it;
    if (on_accept) on_accept(it, f);
    if (decrease <= opt.tolerance * std::abs(f)) {
      out.converged = true;
      break;
    }
  }
  return out;
}

}  // namespace evpose
