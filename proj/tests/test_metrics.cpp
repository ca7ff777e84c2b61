#include <doctest.h>

#include <numbers>
#include <random>

#include "evpose/metrics.hpp"
#include "support.hpp"

using namespace evpose;
using evpose::test::code_of;
using evpose::test::random_rotation;

namespace {

Points3 random_points(std::mt19937& gen, int n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Points3 p(n, 3);
  for (int i = 0; i < n; ++i) p.row(i) << g(gen), g(gen), g(gen);
  return p;
}

Points3 rigid(const Points3& p, const Mat3<double>& r, const Eigen::Vector3d& t) {
  return (p * r.transpose()).rowwise() + t.transpose();
}

double sse(const Points3& a, const Points3& b) { return (a - b).squaredNorm(); }

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("MPJPE closed forms") {
  std::mt19937 gen(1);
  const Points3 gt = random_points(gen, 4);
  CHECK(mpjpe(gt, gt) == 0.0);
  CHECK(mpjpe(Points3(gt.rowwise() + Eigen::RowVector3d(0.003, 0.004, 0)), gt) == doctest::Approx(5.0).epsilon(1e-9));
  Points3 one = gt;
  one(2, 1) += 0.008;
  CHECK(mpjpe(one, gt) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(code_of([&] { mpjpe(gt, random_points(gen, 5)); }) == Errc::ShapeMismatch);
}

TEST_CASE("Procrustes: exact recovery") {
  std::mt19937 gen(2);
  for (int i = 0; i < 50; ++i) {
    const Points3 pred = random_points(gen, 5);
    const Mat3<double> r = random_rotation(gen);
    const Eigen::Vector3d t(1.0, -2.0, 0.5);
    const Points3 gt = rigid(pred, r, t);
    const RigidAlignment a = procrustes_align(pred, gt);
    CHECK(is_rotation(a.rotation));
    CHECK((a.rotation - r).norm() <= 1e-9);
    CHECK((a.translation - t).norm() <= 1e-9);
    CHECK(pa_mpjpe(pred, gt) <= 1e-9);
  }
}

TEST_CASE("Procrustes: reflections are not allowed") {
  Points3 tri(4, 3);
  tri << 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 3;
  Points3 mirror = tri;
  mirror.col(0) *= -1.0;
  const RigidAlignment a = procrustes_align(tri, mirror);
  CHECK(a.rotation.determinant() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(is_rotation(a.rotation));
  CHECK(pa_mpjpe(tri, mirror) > 1.0);
}

TEST_CASE("Procrustes: never beaten by random rigid transforms") {
  std::mt19937 gen(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int inst = 0; inst < 5; ++inst) {
    const Points3 pred = random_points(gen, 5), gt = random_points(gen, 5);
    const RigidAlignment a = procrustes_align(pred, gt);
    const double best = sse(a.aligned, gt);
    for (int k = 0; k < 2000; ++k) {
      const Mat3<double> r = k % 2 ? random_rotation(gen) : Mat3<double>(random_rotation(gen, 0.05) * a.rotation);
      const Eigen::Vector3d t = a.translation + Eigen::Vector3d(n(gen), n(gen), n(gen)) * (k % 2 ? 1.0 : 0.01);
      CHECK(best <= sse(rigid(pred, r, t), gt) * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("Procrustes: degenerate inputs") {
  Points3 line(4, 3);
  line << 0, 0, 0, 1, 0, 0, 2, 0, 0, 3, 0, 0;
  CHECK(code_of([&] { procrustes_align(line, line); }) == Errc::DegenerateConfiguration);
  CHECK(code_of([&] { procrustes_align(line.topRows(2), line.topRows(2)); }) == Errc::DegenerateConfiguration);
}

TEST_CASE("PA-MPJPE is invariant under rigid motion of the prediction") {
  std::mt19937 gen(4);
  for (int i = 0; i < 20; ++i) {
    const Points3 pred = random_points(gen, 8), gt = random_points(gen, 8);
    const double base = pa_mpjpe(pred, gt);
    const Points3 moved = rigid(pred, random_rotation(gen), Eigen::Vector3d(1, 2, 3));
    CHECK(std::abs(pa_mpjpe(moved, gt) - base) <= 1e-9);
    CHECK(base <= mpjpe(pred, gt) + 1e-12);
  }
}

TEST_CASE("PEL-MPJPE") {
  std::mt19937 gen(5);
  const Points3 gt = random_points(gen, 6);
  CHECK(pel_mpjpe(Points3(gt.rowwise() + Eigen::RowVector3d(0.3, -0.1, 2)), gt) <= 1e-12);
  const Mat3<double> r = axis_angle_to_matrix(Vec3<double>(0, 0.4, 0));
  const Eigen::Vector3d pelvis = gt.row(0).transpose();
  const Points3 turned = rigid(Points3(gt.rowwise() - pelvis.transpose()), r, pelvis);
  CHECK(pel_mpjpe(turned, gt) > 1.0);
  CHECK(pa_mpjpe(turned, gt) <= 1e-9);
  const Points3 pred = random_points(gen, 6);
  const Eigen::RowVector3d t(5, -3, 1);
  CHECK(std::abs(pel_mpjpe(Points3(pred.rowwise() + t), Points3(gt.rowwise() + t)) - pel_mpjpe(pred, gt)) <= 1e-9);
  CHECK(pel_mpjpe(pred, gt, 3) >= 0.0);
  CHECK(code_of([&] { pel_mpjpe(pred, gt, 6); }) == Errc::ShapeMismatch);
}

TEST_CASE("PCKh boundary conventions") {
  Points3 gt(5, 3);
  gt << 0, 0, 0, 0, 1, 0, 0, 1.25, 0, 1, 0, 0, -1, 0.5, 0.25;  // pelvis, neck, head, two more
  const double half_bone = 0.125;
  CHECK(pckh(gt, gt, 0, 2, 1) == 1.0);

  Points3 pred = gt;
  pred.bottomRows(4).col(0).array() += half_bone;
  CHECK(pckh(pred, gt, 0, 2, 1) == 0.0);
  pred.bottomRows(4).col(0).array() -= 1e-9;
  CHECK(pckh(pred, gt, 0, 2, 1) == 1.0);

  Points3 shifted_pelvis = gt;
  shifted_pelvis(0, 2) -= half_bone;
  CHECK(pckh(shifted_pelvis, gt, 0, 2, 1) == 0.0);

  Points3 mixed = gt;
  mixed(2, 0) += 10.0;
  mixed(3, 0) += 10.0;
  CHECK(pckh(mixed, gt, 0, 2, 1) == 0.5);
  CHECK(pckh(gt, gt, 0, 2, 1, 1e-6) == 1.0);
  Points3 degenerate = gt;
  degenerate.row(2) = degenerate.row(1);
  CHECK(code_of([&] { pckh(gt, degenerate, 0, 2, 1); }) == Errc::ZeroHeadBone);
}

TEST_CASE("PCKh is invariant to common scaling") {
  std::mt19937 gen(6);
  for (int i = 0; i < 20; ++i) {
    const Points3 gt = random_points(gen, 10), pred = gt + random_points(gen, 10, 0.4);
    const double base = pckh(pred, gt, 0, 1, 2);
    CHECK(base >= 0.0);
    CHECK(base <= 1.0);
    for (double s : {0.5, 3.0}) CHECK(pckh(Points3(pred * s), Points3(gt * s), 0, 1, 2) == base);
  }
}

TEST_CASE("PVE") {
  std::mt19937 gen(7);
  const Points3 v = random_points(gen, 30);
  CHECK(pve(v, v) == 0.0);
  const Eigen::RowVector3d dir = Eigen::RowVector3d(1, 2, -2).normalized();
  CHECK(pve(Points3(v.rowwise() + 0.007 * dir), v) == doctest::Approx(7.0).epsilon(1e-9));

  // Rotating a ring of radius r by angle a moves every vertex by 2 r sin(a/2).
  for (double radius : {0.5, 1.0, 2.0}) {
    Points3 ring(64, 3);
    for (int i = 0; i < 64; ++i) {
      const double phi = 2 * std::numbers::pi * i / 64;
      ring.row(i) << radius * std::cos(phi), radius * std::sin(phi), 0;
    }
    const Points3 turned = rigid(ring, axis_angle_to_matrix(Vec3<double>(0, 0, 0.1)), Eigen::Vector3d::Zero());
    CHECK(pve(turned, ring) == doctest::Approx(1000 * 2 * radius * std::sin(0.05)).epsilon(1e-9));
  }
  CHECK(code_of([&] { pve(v, v.topRows(3)); }) == Errc::ShapeMismatch);
}

TEST_CASE("sequence evaluation") {
  std::mt19937 gen(8);
  MetricsInput in;
  for (int f = 0; f < 3; ++f) {
    const Points3 j = random_points(gen, 24), v = random_points(gen, 50);
    in.gt_joints.push_back(j);
    in.gt_verts.push_back(v);
    in.pred_joints.push_back(Points3(j.rowwise() + Eigen::RowVector3d(0, 0, 0.001 * f)));
    in.pred_verts.push_back(Points3(v.rowwise() + Eigen::RowVector3d(0, 0, 0.001 * f)));
  }
  const MetricsReport r = evaluate(in, 0, 15, 12);
  REQUIRE(r.frames.size() == 3);
  CHECK(r.frames[2].mpjpe == doctest::Approx(2.0));
  CHECK(r.frames[2].pve == doctest::Approx(2.0));
  CHECK(r.frames[2].pel_mpjpe <= 1e-9);
  CHECK(r.mean.mpjpe == doctest::Approx(1.0));
  CHECK(r.mean.pckh == 1.0);
  in.pred_verts.pop_back();
  CHECK(code_of([&] { evaluate(in, 0, 15, 12); }) == Errc::ShapeMismatch);
}

}  // TEST_SUITE
