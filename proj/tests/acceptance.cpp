// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "evpose/body_model.hpp"
#include "evpose/events.hpp"
#include "evpose/fitter.hpp"
#include "evpose/flow.hpp"
#include "evpose/metrics.hpp"
#include "evpose/rotation.hpp"
#include "evpose/simulator.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace evpose;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

class Notes {
 public:
  void fail(const std::string& what) {
    ok_ = false;
    add(what);
  }
  void add(const std::string& what) {
    if (!text_.empty()) text_ += "; ";
    text_ += what;
  }
  void check(bool cond, const std::string& what) {
    if (!cond) fail("FAILED " + what);
  }
  Outcome done() const { return {ok_, text_}; }

 private:
  bool ok_ = true;
  std::string text_;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

// ---------------------------------------------------------------- 1

Outcome gradients() {
  const GradientCheckReport r = check_gradients(1, 20);
  Notes n;
  n.check(r.trials == 20, "trial count");
  for (const auto& [term, err] : r.max_rel_error) {
    n.add(std::string(term_name(term)) + " " + fmt(err));
    n.check(err <= 1e-3, term_name(term));
  }
  n.check(r.passed, "report");
  n.add("min counted vertices " + std::to_string(r.min_counted_vertices));
  return n.done();
}

// ---------------------------------------------------------------- 2

Outcome rotations() {
  Notes n;
  std::mt19937 gen(2);
  double round_trip = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Mat3<double> m = test::random_rotation(gen, std::numbers::pi * 0.999);
    const Rot6d r = matrix_to_rot6d(m);
    round_trip = std::max(round_trip, (rot6d_to_matrix(r) - m).cwiseAbs().maxCoeff());
    const Vec3<double> aa = matrix_to_axis_angle(m);
    round_trip = std::max(round_trip, (axis_angle_to_matrix(aa) - m).cwiseAbs().maxCoeff());
    const Rot6d back = matrix_to_rot6d(axis_angle_to_matrix(matrix_to_axis_angle(rot6d_to_matrix(r))));
    round_trip = std::max(round_trip, (rot6d_to_matrix(back) - m).cwiseAbs().maxCoeff());
  }
  n.check(round_trip <= 1e-9, "round trips");
  n.add("round trip " + fmt(round_trip));

  const Mat3<double> id = Mat3<double>::Identity();
  const Mat3<double> flip = axis_angle_to_matrix(Vec3<double>(0, 0, std::numbers::pi));
  const Mat3<double> small = axis_angle_to_matrix(Vec3<double>(0.3, 0, 0));
  const double e0 = std::abs(geodesic_sq(id, id));
  const double epi = std::abs(geodesic_sq(id, flip) - std::numbers::pi * std::numbers::pi);
  const double target = std::pow(std::acos((1.0 + 2.0 * std::cos(0.3) - 1.0) / 2.0), 2);
  const double e03 = std::abs(geodesic_sq(id, small) - target);
  n.check(e0 <= 1e-9 && epi <= 1e-9 && e03 <= 1e-9, "closed forms");
  n.add("closed forms " + fmt(std::max({e0, epi, e03})));

  double bi = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Mat3<double> a = test::random_rotation(gen), b = test::random_rotation(gen), c = test::random_rotation(gen);
    const double base = geodesic_sq(a, b);
    bi = std::max({bi, std::abs(geodesic_sq<double>(c * a, c * b) - base),
                   std::abs(geodesic_sq<double>(a * c, b * c) - base)});
  }
  n.check(bi <= 1e-9, "bi-invariance");
  n.add("bi-invariance " + fmt(bi));
  return n.done();
}

// ---------------------------------------------------------------- 3

double sse(const Points3& a, const Points3& b) { return (a - b).squaredNorm(); }

Outcome procrustes() {
  Notes n;
  std::mt19937 gen(3);
  std::normal_distribution<double> g(0.0, 1.0);
  int violations = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  for (int inst = 0; inst < 50; ++inst) {
    Points3 pred(5, 3), gt(5, 3);
    for (int k = 0; k < 5; ++k)
      for (int c = 0; c < 3; ++c) pred(k, c) = 0.3 * g(gen);
    const Mat3<double> r = test::random_rotation(gen);
    const Eigen::RowVector3d t(g(gen), g(gen), g(gen));
    for (int k = 0; k < 5; ++k) {
      gt.row(k) = (r * pred.row(k).transpose()).transpose() + t;
      for (int c = 0; c < 3; ++c) gt(k, c) += 0.05 * g(gen);
    }
    const RigidAlignment best = procrustes_align(pred, gt);
    const double e_best = sse(best.aligned, gt);
    for (int trial = 0; trial < 10000; ++trial) {
      Mat3<double> rr;
      Eigen::RowVector3d tt;
      if (trial % 2 == 0) {
        rr = test::random_rotation(gen);
        tt = Eigen::RowVector3d(g(gen), g(gen), g(gen));
      } else {
        // near the optimum
        const double scale = std::pow(10.0, -1.0 - 2.0 * (trial % 7) / 6.0);
        rr = test::random_rotation(gen, scale) * best.rotation;
        tt = best.translation.transpose() + scale * Eigen::RowVector3d(g(gen), g(gen), g(gen));
      }
      Points3 moved = (pred * rr.transpose()).rowwise() + tt;
      const double e = sse(moved, gt);
      worst_margin = std::min(worst_margin, e - e_best);
      if (e_best > e * (1.0 + 1e-12)) ++violations;
    }
  }
  n.check(violations == 0, "oracle (" + std::to_string(violations) + " better transforms)");
  n.add("500000 transforms, smallest margin " + fmt(worst_margin));

  double exact = 0.0;
  for (int inst = 0; inst < 50; ++inst) {
    Points3 pred(5, 3);
    for (int k = 0; k < 5; ++k)
      for (int c = 0; c < 3; ++c) pred(k, c) = 0.3 * g(gen);
    const Mat3<double> r = test::random_rotation(gen);
    const Eigen::RowVector3d t(g(gen), g(gen), g(gen));
    const Points3 gt = (pred * r.transpose()).rowwise() + t;
    exact = std::max(exact, pa_mpjpe(pred, gt));
  }
  n.check(exact <= 1e-9, "exact recovery");
  n.add("exact recovery " + fmt(exact) + " mm");
  return n.done();
}

// ---------------------------------------------------------------- 4

Outcome flow_benchmark() {
  Notes n;
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 12; ++i)
    waves.push_back({(2 * u(gen) - 1) * 0.35, (2 * u(gen) - 1) * 0.35, u(gen) * 6.28, u(gen)});
  const auto texture = [&](double x, double y) {
    double s = 0.5;
    for (const Wave& w : waves) s += 0.15 * w.amp * std::sin(w.kx * x + w.ky * y + w.phase);
    return s;
  };
  Image first(64, 64), second(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      first(y, x) = texture(x, y);
      second(y, x) = texture(x - 3.0, y);
    }

  const FlowSolverConfig cfg;
  const FlowSolution sol = solve_flow(first, second, cfg);
  const int y0 = 8, y1 = 56, x0 = 8, x1 = 53;
  double su = 0.0, sv = 0.0;
  int count = 0;
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x, ++count) {
      su += sol.flow.u(y, x);
      sv += sol.flow.v(y, x);
    }
  const double mu = su / count, mv = sv / count;
  const double err = std::hypot(mu - 3.0, mv);
  n.check(err <= 0.2, "mean flow");
  n.add("mean flow (" + fmt(mu) + ", " + fmt(mv) + ")");

  bool monotone = !sol.trace.empty();
  for (std::size_t i = 1; i < sol.trace.size(); ++i)
    if (sol.trace[i].level == sol.trace[i - 1].level && sol.trace[i].objective > sol.trace[i - 1].objective)
      monotone = false;
  n.check(monotone, "trace non-increasing");

  FlowField gt(64, 64);
  gt.u.setConstant(3.0);
  const Image warped = warp(second, gt);
  double photometric = 0.0;
  int pixels = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 61; ++x, ++pixels) photometric += charbonnier(first(y, x) - warped(y, x), cfg.eps);
  const double bound = pixels * cfg.eps;
  n.check(photometric <= 1.01 * bound, "lower bound");
  n.add("photometric / bound " + fmt(photometric / bound));
  return n.done();
}

// ---------------------------------------------------------------- 5

Outcome event_pipeline() {
  Notes n;
  const fs::path dir = test::scratch_dir("acceptance_events");
  const BodyModel model = make_mini_body(0);
  SimConfig sc;
  sc.steps = 4;
  sc.keyframes = motion_script("arm_raise", model);
  const SimOutput sim = simulate(sc, model, Camera{});
  write_event_file(dir / "sim.evt", sim.events, sim.width, sim.height);
  const EventStream parsed = read_event_file(dir / "sim.evt");
  n.check(parsed.events == sim.events, "sim stream identity");
  const auto packets = packetize(parsed.events, sim.frame_times);
  std::size_t in_packets = 0;
  double in_frames = 0.0;
  for (const EventPacket& p : packets) {
    in_packets += p.events.size();
    in_frames += aggregate_frame(p, 4, sim.height, sim.width, AggregationMode::Count).sum();
  }
  n.check(in_packets == sim.events.size() && static_cast<std::size_t>(in_frames) == sim.events.size(),
          "count conservation");
  n.add(std::to_string(sim.events.size()) + " simulated events conserved");

  std::mt19937 gen(5);
  std::uniform_int_distribution<int> px(0, 639), py(0, 479), pol(0, 1);
  std::uniform_int_distribution<std::uint64_t> dt(0, 20);
  std::vector<Event> big(100000);
  std::uint64_t t = 0;
  for (Event& e : big) {
    t += dt(gen);
    e.x = static_cast<std::uint16_t>(px(gen));
    e.y = static_cast<std::uint16_t>(py(gen));
    e.t = t;
    e.p = pol(gen) ? 1 : -1;
  }
  write_event_file(dir / "big.evt", big, 640, 480);
  const EventStream back = read_event_file(dir / "big.evt");
  n.check(back.events == big && back.width == 640 && back.height == 480, "1e5 event identity");
  write_event_file(dir / "big2.evt", back.events, back.width, back.height);
  n.check(test::slurp(dir / "big.evt") == test::slurp(dir / "big2.evt"), "1e5 event file bytes");
  n.add("1e5-event file round trip");
  fs::remove_all(dir);
  return n.done();
}

// ---------------------------------------------------------------- 6, 7

struct Sequence {
  BodyModel model = make_mini_body(0);
  Camera camera;
  SimOutput sim;

  Sequence() {
    SimConfig sc;
    sc.steps = 16;
    sc.keyframes = motion_script("arm_raise", model);
    sim = simulate(sc, model, camera);
  }
};

const Sequence& sequence() {
  static const Sequence s;
  return s;
}

Outcome closed_loop() {
  Notes n;
  const Sequence& s = sequence();
  FlowSolverConfig fc;
  fc.lambda_smooth = 0.1;  // lets the solver follow the thin moving arm
  std::vector<FlowField> flows;
  for (std::size_t i = 0; i + 1 < s.sim.frames.size(); ++i)
    flows.push_back(solve_flow(s.sim.frames[i], s.sim.frames[i + 1], fc).flow);
  FitConfig cfg;
  cfg.steps = 16;
  const FitResult r = fit_sequence(s.sim.poses.front(), {}, flows, &s.sim.targets, s.model, s.camera, cfg);
  n.check(r.states.size() == 16, "sequence length");
  double flow_loss = 0.0;
  for (const StepLoss& l : r.losses) flow_loss += l.flow;
  n.check(flow_loss > 0.0, "flow term active");

  double worst_mpjpe = 0.0, min_pckh = 1.0;
  for (std::size_t i = 0; i < r.states.size(); ++i) {
    const Points3 pred = forward(s.model, r.states[i]).joints;
    const Points3 gt = forward(s.model, s.sim.poses[i + 1]).joints;
    worst_mpjpe = std::max(worst_mpjpe, mpjpe(pred, gt));
    min_pckh = std::min(min_pckh, pckh(pred, gt, s.model.pelvis, s.model.head, s.model.neck));
  }
  const Points3 pred = forward(s.model, r.states.back()).joints;
  const Points3 gt = forward(s.model, s.sim.poses.back()).joints;
  const double final_mpjpe = mpjpe(pred, gt), final_pa = pa_mpjpe(pred, gt);
  n.check(final_mpjpe <= 5.0, "final MPJPE");
  n.check(final_pa <= 5.0, "final PA-MPJPE");
  n.check(min_pckh == 1.0, "PCKh");
  n.add("final MPJPE " + fmt(final_mpjpe) + " mm, PA-MPJPE " + fmt(final_pa) + " mm, worst MPJPE " +
        fmt(worst_mpjpe) + " mm, min PCKh " + fmt(min_pckh) + ", summed coherence " + fmt(flow_loss));
  return n.done();
}

Outcome coherence_signal() {
  Notes n;
  const Sequence& s = sequence();
  FitConfig cfg;
  cfg.steps = 16;
  const FitResult r = fit_sequence(s.sim.poses.front(), {}, s.sim.flows, nullptr, s.model, s.camera, cfg);

  double sum = 0.0;
  long count = 0;
  for (std::size_t i = 0; i < r.states.size(); ++i) {
    const PoseState& prev_state = i == 0 ? s.sim.poses.front() : r.states[i - 1];
    const Points3 prev = forward(s.model, prev_state).vertices;
    const Points3 cur = forward(s.model, r.states[i]).vertices;
    const std::vector<bool> visible = visible_vertices(s.model, prev, s.camera);
    const Points2 p0 = project(s.camera, prev), p1 = project(s.camera, cur);
    const FlowField& gt = s.sim.flows[i];
    for (Eigen::Index v = 0; v < p0.rows(); ++v) {
      if (!visible[static_cast<std::size_t>(v)]) continue;
      const Eigen::Vector2d image(sample_bilinear(gt.u, p0(v, 0), p0(v, 1)).value,
                                  sample_bilinear(gt.v, p0(v, 0), p0(v, 1)).value);
      const Eigen::Vector2d shape = (p1.row(v) - p0.row(v)).transpose();
      if (image.norm() <= cfg.tau || shape.norm() == 0.0) continue;
      sum += shape.dot(image) / (shape.norm() * image.norm());
      ++count;
    }
  }
  const double mean = count ? sum / static_cast<double>(count) : 0.0;
  n.check(count > 0, "no above-threshold vertices");
  n.check(mean >= 0.9, "mean cosine");
  n.add("mean cosine " + fmt(mean) + " over " + std::to_string(count) + " vertex samples");
  return n.done();
}

// ---------------------------------------------------------------- 8

Outcome metric_boundaries() {
  Notes n;
  // Dyadic coordinates keep every distance exact.
  Points3 gt(5, 3);
  gt << 0, 0, 0, 0, 0.5, 0, 0, 0.75, 0, 0.25, 0.25, 0, -0.25, 0.25, 0;  // pelvis, neck, head, two others
  const double half = 0.5 * (gt.row(2) - gt.row(1)).norm();
  Points3 pred = gt;
  for (int k = 1; k < 5; ++k) pred(k, 0) += half;
  n.check(pckh(pred, gt, 0, 2, 1) == 0.0, "PCKh at exactly half the head bone");
  Points3 inside = gt;
  for (int k = 1; k < 5; ++k) inside(k, 0) += 0.5 * half;
  n.check(pckh(inside, gt, 0, 2, 1) == 1.0, "PCKh inside the threshold");

  std::mt19937 gen(8);
  std::normal_distribution<double> g(0.0, 1.0);
  Points3 a(24, 3), b(24, 3);
  for (int k = 0; k < 24; ++k)
    for (int c = 0; c < 3; ++c) {
      a(k, c) = g(gen);
      b(k, c) = g(gen);
    }
  const double base = pel_mpjpe(a, b);
  double pel_dev = 0.0;
  for (int i = 0; i < 10; ++i) {
    const Eigen::RowVector3d t(g(gen), g(gen), g(gen));
    pel_dev = std::max(pel_dev, std::abs(pel_mpjpe(a.rowwise() + t, b.rowwise() + t) - base));
    pel_dev = std::max(pel_dev, std::abs(pel_mpjpe(a.rowwise() + t, b) - base));
  }
  n.check(pel_dev <= 1e-9, "PEL translation invariance");

  const Eigen::RowVector3d offset(0.003, -0.004, 0.012);
  const double p = pve(a.rowwise() + offset, a);
  n.check(std::abs(p - 13.0) <= 1e-9, "PVE uniform offset");
  n.add("PEL deviation " + fmt(pel_dev) + " mm, PVE " + fmt(p) + " mm (13 expected)");
  return n.done();
}

// ---------------------------------------------------------------- 9

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

bool run_all(const fs::path& root, const fs::path& config, std::string& error) {
  const std::string exe = std::string("\"") + EVPOSE_CLI + "\" ";
  const fs::path sim = root / "sim";
  const std::vector<std::string> commands = {
      "simulate -c " + q(config) + " -o " + q(sim),
      "aggregate -c " + q(config) + " -e " + q(sim / "events.evt") + " -m " + q(sim / "manifest.json") + " -o " +
          q(root / "frames"),
      "flow -c " + q(config) + " --first " + q(sim / "gray" / "gray_000.bin") + " --second " +
          q(sim / "gray" / "gray_001.bin") + " -o " + q(root / "pair" / "flow.bin"),
      "flow -c " + q(config) + " --first " + q(root / "frames" / "frame_000.bin") + " --second " +
          q(root / "frames" / "frame_001.bin") + " --kind events -o " + q(root / "pair" / "event_flow.bin"),
      "flow -c " + q(config) + " --manifest " + q(sim / "manifest.json") + " --frames " +
          q(root / "frames" / "frames.json") + " --out-dir " + q(root / "flow"),
      "fit -c " + q(config) + " --begin " + q(sim / "begin_pose.json") + " --flows " +
          q(root / "flow" / "flows.json") + " --targets " + q(sim / "targets.json") + " --frames " +
          q(root / "frames" / "frames.json") + " -o " + q(root / "fit"),
      "eval -c " + q(config) + " --pred " + q(root / "fit" / "poses.json") + " --gt " + q(sim / "poses.json") +
          " -o " + q(root / "eval"),
      "pipeline -c " + q(config) + " -o " + q(root / "pipeline"),
      "check-gradients --seed 4 --trials 2 -o " + q(root / "gradients.json"),
  };
  fs::create_directories(root / "pair");
  for (const std::string& c : commands) {
    const test::CommandResult r = test::run(exe + c);
    if (r.status != 0) {
      error = c.substr(0, c.find(' ')) + " exited " + std::to_string(r.status) + ": " + r.output;
      return false;
    }
  }
  return true;
}

Outcome determinism() {
  Notes n;
  const fs::path dir = test::scratch_dir("acceptance_determinism");
  const fs::path config = dir / "config.json";
  std::ofstream(config) << R"({
  "seed": 5,
  "sim": {"script": "arm_raise", "steps": 3},
  "flow": {"iterations": 30, "pyramid_levels": 2},
  "fit": {"max_iters": 60}
})";
  std::string error;
  if (!run_all(dir / "a", config, error) || !run_all(dir / "b", config, error)) {
    n.fail(error);
    return n.done();
  }
  std::size_t files = 0, differing = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), dir / "a");
    ++files;
    if (!fs::exists(dir / "b" / rel) || test::slurp(entry.path()) != test::slurp(dir / "b" / rel)) {
      ++differing;
      n.fail("differs: " + rel.string());
    }
  }
  std::size_t files_b = 0;
  for (const auto& entry : fs::recursive_directory_iterator(dir / "b"))
    if (entry.is_regular_file()) ++files_b;
  n.check(files_b == files, "file sets match");
  n.check(files > 0, "outputs written");
  n.add(std::to_string(files) + " files from 9 commands byte-identical across runs");
  if (differing == 0) fs::remove_all(dir);
  return n.done();
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;  // <= 0: no runtime limit
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", 60, gradients},
      {2, "rotation suite", 5, rotations},
      {3, "Procrustes oracle", 30, procrustes},
      {4, "flow solver benchmark", 120, flow_benchmark},
      {5, "event pipeline conservation", 10, event_pipeline},
      {6, "closed-loop fitting", 600, closed_loop},
      {7, "coherence-loss signal", 600, coherence_signal},
      {8, "metrics boundary conventions", 5, metric_boundaries},
      {9, "determinism", 0, determinism},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0 && secs > c.limit_s) {
      out.ok = false;
      out.detail += "; over the " + fmt(c.limit_s) + " s limit";
    }
    if (!out.ok) ++failures;
    std::printf("%s %d %s: %s [%.2f s]\n", out.ok ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
