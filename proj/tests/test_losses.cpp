#include <doctest.h>

#include <numbers>
#include <random>

#include "evpose/losses.hpp"
#include "support.hpp"

using namespace evpose;
using evpose::test::code_of;
using evpose::test::random_rotation;

namespace {

const BodyModel& body() {
  static const BodyModel m = make_mini_body(0);
  return m;
}

/// Points at fixed depth whose projections land on the integer pixels (x, y).
Points3 points_on_pixels(const Camera& cam, const std::vector<Eigen::Vector2i>& px, double z) {
  Points3 p(px.size(), 3);
  for (std::size_t i = 0; i < px.size(); ++i)
    p.row(i) << (px[i].x() - cam.cx) * z / cam.fx, (px[i].y() - cam.cy) * z / cam.fy, z;
  return p;
}

std::vector<Eigen::Vector2i> pixel_grid() {
  std::vector<Eigen::Vector2i> px;
  for (int y = 20; y < 100; y += 9)
    for (int x = 15; x < 110; x += 11) px.emplace_back(x, y);
  return px;
}

}  // namespace

TEST_SUITE("losses") {

TEST_CASE("translation loss") {
  const std::vector<Eigen::Vector3d> t = {{1, 2, 3}, {0, 0, 1}, {-1, 0.5, 2}};
  CHECK(loss_trans(t, t) == 0.0);
  std::vector<Eigen::Vector3d> off = t;
  for (auto& d : off) d += Eigen::Vector3d(0.1, -0.2, 0.3);
  CHECK(loss_trans(off, t) == doctest::Approx(3 * 0.14).epsilon(1e-12));
  const std::vector<Eigen::Vector3d> a = {{1, 2, 2}}, z = {{0, 0, 0}};
  CHECK(loss_trans(a, z) == 9.0);
  CHECK(code_of([&] { loss_trans(a, t); }) == Errc::LengthMismatch);
}

TEST_CASE("pose loss") {
  std::mt19937 gen(1);
  std::vector<std::vector<Rot6d>> p(3, std::vector<Rot6d>(24));
  for (auto& step : p)
    for (auto& r : step) r = matrix_to_rot6d(random_rotation(gen));
  CHECK(loss_pose(p, p) <= 3 * 24 * std::pow(std::acos(1 - kGeodesicClamp), 2));

  auto q = p;
  q[1][5] = matrix_to_rot6d(Mat3<double>(rot6d_to_matrix(p[1][5]) *
                                         axis_angle_to_matrix(Vec3<double>(0, 0, std::numbers::pi))));
  CHECK(loss_pose(p, q) == doctest::Approx(std::numbers::pi * std::numbers::pi).epsilon(1e-9));
  q = p;
  q[2][0] = matrix_to_rot6d(Mat3<double>(axis_angle_to_matrix(Vec3<double>(0.3, 0, 0)) * rot6d_to_matrix(p[2][0])));
  CHECK(std::abs(loss_pose(p, q) - 0.09) <= 1e-9);

  const Mat3<double> g = random_rotation(gen);
  auto pg = p, qg = q;
  for (auto* seq : {&pg, &qg})
    for (auto& step : *seq)
      for (auto& r : step) r = matrix_to_rot6d(Mat3<double>(g * rot6d_to_matrix(r)));
  CHECK(std::abs(loss_pose(pg, qg) - loss_pose(p, q)) <= 1e-9);
  CHECK(code_of([&] { loss_pose(p, std::vector<std::vector<Rot6d>>(2)); }) == Errc::LengthMismatch);
}

TEST_CASE("joint losses") {
  const Camera cam;
  const Points3 j{{0, 0, 3}, {0.2, 0.1, 3.5}, {-0.3, 0.4, 2.5}};
  const std::vector<Points3> pred = {j};
  CHECK(loss_joints3d(pred, pred) == 0.0);
  const std::vector<Points3> moved = {Points3(j.rowwise() + Eigen::RowVector3d(1, 2, 3))};
  Points3 jt = j;
  jt(1, 0) += 0.05;
  const std::vector<Points3> t = {jt};
  const std::vector<Points3> tm = {Points3(jt.rowwise() + Eigen::RowVector3d(1, 2, 3))};
  CHECK(loss_joints3d(moved, tm) == doctest::Approx(loss_joints3d(pred, t)).epsilon(1e-12));

  Points2 p2 = project(cam, j);
  CHECK(loss_joints2d(pred, std::vector<Points2>{p2}, cam) == doctest::Approx(0.0).epsilon(1e-20));
  p2(2, 0) += 3.0;
  p2(2, 1) -= 4.0;
  CHECK(loss_joints2d(pred, std::vector<Points2>{p2}, cam) == doctest::Approx(25.0).epsilon(1e-12));

  Points3 behind = j;
  behind(0, 2) = -1.0;
  CHECK(code_of([&] { loss_joints2d(std::vector<Points3>{behind}, std::vector<Points2>{p2}, cam); }) ==
        Errc::BehindCamera);
}

TEST_CASE("shape flow") {
  const Camera cam;
  const Points3 prev = points_on_pixels(cam, pixel_grid(), 2.5);
  CHECK(shape_flow(prev, prev, cam).cwiseAbs().maxCoeff() == 0.0);

  const double delta = 0.04;
  const Points3 cur = prev.rowwise() + Eigen::RowVector3d(delta, 0, 0);
  const Points2 f = shape_flow(prev, cur, cam);
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    CHECK(f(i, 0) == doctest::Approx(cam.fx * delta / 2.5).epsilon(1e-12));
    CHECK(std::abs(f(i, 1)) <= 1e-12);
  }

  const Points3 closer = prev.rowwise() - Eigen::RowVector3d(0, 0, 0.3);
  const Points2 r = shape_flow(prev, closer, cam);
  const Points2 pp = project(cam, prev);
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    const Eigen::Vector2d off(pp(i, 0) - cam.cx, pp(i, 1) - cam.cy);
    if (off.norm() < 1e-9) continue;
    CHECK(Eigen::Vector2d(r.row(i)).dot(off) > 0.0);
    CHECK(std::abs(off.x() * r(i, 1) - off.y() * r(i, 0)) <= 1e-9);
  }
  const Points2 away = shape_flow(prev, Points3(prev.rowwise() + Eigen::RowVector3d(0, 0, 0.3)), cam);
  for (Eigen::Index i = 0; i < r.rows(); ++i)
    if (std::abs(pp(i, 0) - cam.cx) > 1e-9) CHECK((away(i, 0) > 0) != (r(i, 0) > 0));
}

TEST_CASE("image flow at vertices") {
  FlowField f(10, 12);
  f.u.setConstant(1.25);
  f.v.setConstant(-0.5);
  Points2 p(3, 2);
  p << 3.3, 4.7, 0, 0, -5, 20;
  const Points2 s = image_flow_at_vertices(f, p);
  for (Eigen::Index i = 0; i < 3; ++i) CHECK((s.row(i) - Eigen::RowVector2d(1.25, -0.5)).norm() <= 1e-15);
  f.u(4, 3) = 9.0;
  f.v(9, 0) = 7.0;
  Points2 q(2, 2);
  q << 3, 4, -5, 20;
  const Points2 t = image_flow_at_vertices(f, q);
  CHECK(t(0, 0) == 9.0);
  CHECK(t(1, 1) == 7.0);
}

TEST_CASE("coherence: parallel, opposite and orthogonal flows") {
  const Camera cam;
  const auto px = pixel_grid();
  const Points3 prev = points_on_pixels(cam, px, 2.0);
  const Points3 cur = prev.rowwise() + Eigen::RowVector3d(0.02, 0.0, 0.0);  // 2 px right
  const std::vector<bool> all(px.size(), true);
  FlowField f(128, 128);
  f.u.setConstant(2.0);
  CHECK(std::abs(loss_flow_coherence(f, prev, cur, cam, all)) <= 1e-15);
  f.u.setConstant(-3.0);
  CHECK(loss_flow_coherence(f, prev, cur, cam, all) == doctest::Approx(2.0 * px.size()).epsilon(1e-12));
  f.u.setZero();
  f.v.setConstant(1.0);
  CHECK(loss_flow_coherence(f, prev, cur, cam, all) == doctest::Approx(1.0 * px.size()).epsilon(1e-12));
}

TEST_CASE("coherence: mask and magnitude floor") {
  const Camera cam;
  const auto px = pixel_grid();
  const Points3 prev = points_on_pixels(cam, px, 2.0);
  const Points3 cur = prev.rowwise() + Eigen::RowVector3d(0.02, 0.0, 0.0);
  std::vector<bool> half(px.size(), false);
  for (std::size_t i = 0; i < px.size(); i += 2) half[i] = true;
  FlowField f(128, 128);
  f.u.setConstant(-3.0);
  const CoherenceResult r = flow_coherence(f, prev, cur, cam, half);
  CHECK(r.counted == static_cast<int>((px.size() + 1) / 2));
  CHECK(r.value == doctest::Approx(2.0 * r.counted));
  for (std::size_t i = 0; i < px.size(); ++i) CHECK(r.selected[i] == half[i]);

  f.u.setConstant(-0.5);  // exactly tau: excluded
  CHECK(flow_coherence(f, prev, cur, cam, half).counted == 0);
  f.u.setConstant(-3.0);
  const Points3 slow = prev.rowwise() + Eigen::RowVector3d(0.004, 0.0, 0.0);  // 0.4 px
  CHECK(flow_coherence(f, prev, slow, cam, half).counted == 0);
  CoherenceOptions clamp;
  clamp.floor = FloorMode::Clamp;
  const CoherenceResult c = flow_coherence(f, prev, slow, cam, half, clamp);
  CHECK(c.counted == r.counted);
  CHECK(c.value == doctest::Approx(r.counted * (1.0 + 0.4 / 0.5)).epsilon(1e-9));
  CHECK(code_of([&] { loss_flow_coherence(f, prev, cur, cam, std::vector<bool>(3, true)); }) ==
        Errc::LengthMismatch);
}

TEST_CASE("coherence depends on direction only") {
  const Camera cam;
  const auto px = pixel_grid();
  const Points3 prev = points_on_pixels(cam, px, 2.0);
  std::mt19937 gen(2);
  std::uniform_real_distribution<double> u(-0.05, 0.05), s(1.0, 4.0);
  Points3 step(px.size(), 3);
  FlowField f(128, 128);
  for (std::size_t i = 0; i < px.size(); ++i) {
    step.row(i) << u(gen), u(gen), 0.0;
    if (step.row(i).norm() < 0.01) step(i, 0) = 0.02;
    f.u(px[i].y(), px[i].x()) = 3 * u(gen) / 0.05 + (u(gen) > 0 ? 1.0 : -1.0);
    f.v(px[i].y(), px[i].x()) = 3 * u(gen) / 0.05;
  }
  const std::vector<bool> all(px.size(), true);
  const Points3 cur = prev + step;
  const CoherenceResult base = flow_coherence(f, prev, cur, cam, all);
  CHECK(base.counted > static_cast<int>(px.size()) / 2);

  Points3 scaled = prev;
  FlowField fs = f;
  for (std::size_t i = 0; i < px.size(); ++i) {
    scaled.row(i) += s(gen) * step.row(i);
    const double k = s(gen);
    fs.u(px[i].y(), px[i].x()) *= k;
    fs.v(px[i].y(), px[i].x()) *= k;
  }
  std::vector<bool> frozen = base.selected;
  CoherenceOptions opt;
  opt.frozen = &frozen;
  CHECK(std::abs(flow_coherence(f, prev, scaled, cam, all, opt).value - base.value) <= 1e-9);
  CHECK(std::abs(flow_coherence(fs, prev, cur, cam, all, opt).value - base.value) <= 1e-9);
  CHECK(base.value >= 0.0);
  CHECK(base.value <= 2.0 * base.counted);
}

TEST_CASE("coherence vertex gradients match central differences") {
  const Camera cam;
  std::mt19937 gen(3);
  std::uniform_real_distribution<double> u(-0.3, 0.3), fr(0.1, 0.9);
  const int n = 40;
  Points3 prev(n, 3), cur(n, 3);
  FlowField f(128, 128);
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) f.u(y, x) = 2.0 * std::sin(0.1 * x + 0.05 * y) + 1.0, f.v(y, x) = std::cos(0.07 * y);
  for (int i = 0; i < n; ++i) {
    const double z = 3.0 + u(gen);
    const double px = 30 + i * 1.7 + fr(gen) * 0.5, py = 40 + (i % 7) * 6 + fr(gen);
    prev.row(i) << (px - cam.cx) * z / cam.fx, (py - cam.cy) * z / cam.fy, z;
    cur.row(i) = prev.row(i) + Eigen::RowVector3d(u(gen) * 0.05, u(gen) * 0.05, u(gen) * 0.1);
  }
  const std::vector<bool> all(n, true);
  const CoherenceResult r = flow_coherence(f, prev, cur, cam, all, {}, true);
  std::vector<bool> frozen = r.selected;
  CoherenceOptions opt;
  opt.frozen = &frozen;
  const double h = 1e-6;
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      for (Points3* pts : {&cur, &prev}) {
        const double keep = (*pts)(i, c);
        (*pts)(i, c) = keep + h;
        const double up = flow_coherence(f, prev, cur, cam, all, opt).value;
        (*pts)(i, c) = keep - h;
        const double down = flow_coherence(f, prev, cur, cam, all, opt).value;
        (*pts)(i, c) = keep;
        const double g = pts == &cur ? r.grad_cur(i, c) : r.grad_prev(i, c);
        CHECK(g == doctest::Approx((up - down) / (2 * h)).epsilon(1e-5).scale(1e-3));
      }
    }
  }
}

TEST_CASE("total loss bookkeeping") {
  const BodyModel& m = body();
  const Camera cam;
  std::mt19937 gen(4);
  PoseState begin = PoseState::rest(m);
  begin.theta[0] = matrix_to_rot6d(axis_angle_to_matrix(Vec3<double>(std::numbers::pi, 0, 0)));
  begin.d = Eigen::Vector3d(0, -0.07, 3.5);
  std::vector<PoseState> truth = {begin};
  for (int t = 0; t < 3; ++t) {
    PoseState p = truth.back();
    p.theta[16] = compose_pose(matrix_to_rot6d(random_rotation(gen, 0.1)), p.theta[16]);
    p.d += Eigen::Vector3d(0.01, 0.0, -0.02);
    truth.push_back(p);
  }
  SequenceTarget tg;
  std::vector<FlowField> flows;
  for (int t = 1; t <= 3; ++t) {
    const ForwardResult f = forward(m, truth[t]);
    tg.d.push_back(truth[t].d);
    tg.theta.push_back(truth[t].theta);
    tg.joints3d.push_back(f.joints);
    tg.joints2d.push_back(project(cam, f.joints));
    FlowField fl(128, 128);
    fl.u.setConstant(1.0);
    flows.push_back(fl);
  }
  const LossWeights w;
  const LossBreakdown exact = total_loss(truth, &tg, flows, LossWeights{10, 20, 1, 10, 0.0}, m, cam);
  CHECK(exact.total <= 3 * 20 * 24 * std::pow(std::acos(1 - kGeodesicClamp), 2));

  std::vector<PoseState> guess = truth;
  for (std::size_t t = 1; t < guess.size(); ++t) {
    guess[t].d += Eigen::Vector3d(0.01 * t, 0, 0);
    guess[t].theta[3] = compose_pose(matrix_to_rot6d(random_rotation(gen, 0.2)), guess[t].theta[3]);
  }
  const LossBreakdown b = total_loss(guess, &tg, flows, w, m, cam);
  REQUIRE(b.steps.size() == 3);
  double sum = 0.0;
  for (const StepLoss& s : b.steps) {
    sum += s.weighted(w);
    for (double v : {s.trans, s.pose, s.joints3d, s.joints2d, s.flow}) CHECK(v >= 0.0);
  }
  CHECK(std::abs(sum - b.total) <= 1e-12 * b.total);
  CHECK(b.total > 0.0);
  CHECK(b.steps[1].trans == doctest::Approx(0.02 * 0.02).epsilon(1e-9));
  CHECK(total_loss(guess, &tg, flows, LossWeights{0, 0, 0, 0, 0}, m, cam).total == 0.0);
  CHECK(code_of([&] { total_loss(std::span(guess).first(2), &tg, flows, w, m, cam); }) == Errc::LengthMismatch);
  CHECK(code_of([] { LossWeights{1, -1, 0, 0, 0}.validate(); }) == Errc::ConfigError);
}

}  // TEST_SUITE
