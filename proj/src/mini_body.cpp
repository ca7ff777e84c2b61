#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "evpose/body_model.hpp"

namespace evpose {

namespace {

constexpr int kAround = 8;
constexpr int kRings = 3;

const std::array<const char*, 24> kJointNames = {
    "pelvis",     "left_hip",       "right_hip",     "spine1",     "left_knee",  "right_knee",
    "spine2",     "left_ankle",     "right_ankle",   "spine3",     "left_foot",  "right_foot",
    "neck",       "left_collar",    "right_collar",  "head",       "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",    "left_wrist",    "right_wrist", "left_hand", "right_hand"};

const std::array<int, 24> kParents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};

// Rest joints in a y-up frame, body facing +z, left side at +x.
const std::array<std::array<double, 3>, 24> kRestJoints = {{
    {0.00, 0.00, 0.00},   {0.09, -0.08, 0.00},  {-0.09, -0.08, 0.00}, {0.00, 0.11, 0.00},
    {0.10, -0.47, 0.00},  {-0.10, -0.47, 0.00}, {0.00, 0.24, 0.00},   {0.10, -0.87, 0.00},
    {-0.10, -0.87, 0.00}, {0.00, 0.30, 0.00},   {0.11, -0.93, 0.11},  {-0.11, -0.93, 0.11},
    {0.00, 0.52, 0.00},   {0.07, 0.42, 0.00},   {-0.07, 0.42, 0.00},  {0.00, 0.60, 0.03},
    {0.17, 0.44, 0.00},   {-0.17, 0.44, 0.00},  {0.43, 0.44, 0.00},   {-0.43, 0.44, 0.00},
    {0.68, 0.44, 0.00},   {-0.68, 0.44, 0.00},  {0.76, 0.44, 0.00},   {-0.76, 0.44, 0.00},
}};

// Radius of the tube that starts at each joint and runs toward its child.
double tube_radius(int driver, int end_joint) {
  switch (driver) {
    case 0: return end_joint == 3 ? 0.12 : 0.08;
    case 3: case 6: return 0.12;
    case 9: return end_joint == 12 ? 0.06 : 0.06;
    case 1: case 2: case 4: case 5: return 0.06;
    case 7: case 8: case 10: case 11: return 0.045;
    case 12: return 0.05;
    case 15: return 0.10;
    case 13: case 14: return 0.05;
    case 16: case 17: case 18: case 19: return 0.04;
    default: return 0.035;
  }
}

struct Segment {
  int driver;
  int end_joint;  // -1 for a terminal tip
  Eigen::Vector3d start;
  Eigen::Vector3d end;
  double radius;
};

struct Rng {
  std::mt19937 gen;
  double uniform() { return (static_cast<double>(gen()) + 0.5) / 4294967296.0; }
  double symmetric() { return 2.0 * uniform() - 1.0; }
};

}  // namespace

BodyModel make_mini_body(unsigned seed) {
  const int k_count = 24;
  Points3 rest_joints(k_count, 3);
  for (int k = 0; k < k_count; ++k)
    rest_joints.row(k) << kRestJoints[k][0], kRestJoints[k][1], kRestJoints[k][2];

  std::vector<Segment> segments;
  for (int k = 1; k < k_count; ++k) {
    const int p = kParents[k];
    segments.push_back({p, k, rest_joints.row(p).transpose(), rest_joints.row(k).transpose(), tube_radius(p, k)});
  }
  const std::array<std::pair<int, Eigen::Vector3d>, 5> tips = {{
      {15, {0.0, 0.80, 0.03}},
      {22, {0.84, 0.44, 0.0}},
      {23, {-0.84, 0.44, 0.0}},
      {10, {0.11, -0.95, 0.20}},
      {11, {-0.11, -0.95, 0.20}},
  }};
  for (const auto& [joint, tip] : tips)
    segments.push_back({joint, -1, rest_joints.row(joint).transpose(), tip, tube_radius(joint, -1)});

  const int per_segment = kRings * kAround + 2;
  const int v_count = static_cast<int>(segments.size()) * per_segment;
  const int f_per_segment = 2 * kAround * (kRings - 1) + 2 * kAround;

  BodyModel model;
  model.template_vertices.resize(v_count, 3);
  model.skin_weights = Eigen::MatrixXd::Zero(v_count, k_count);
  model.joint_regressor = Eigen::MatrixXd::Zero(k_count, v_count);
  model.faces.resize(static_cast<Eigen::Index>(segments.size()) * f_per_segment, 3);
  model.parents.assign(kParents.begin(), kParents.end());
  model.joint_names.assign(kJointNames.begin(), kJointNames.end());
  model.pelvis = 0;
  model.head = 15;
  model.neck = 12;

  // Radial unit direction per vertex, used by the girth blendshape.
  Points3 radial = Points3::Zero(v_count, 3);
  std::vector<bool> has_regressor(k_count, false);

  Eigen::Index face = 0;
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const Segment& seg = segments[s];
    const Eigen::Vector3d axis = (seg.end - seg.start).normalized();
    const Eigen::Vector3d helper = std::abs(axis.y()) < 0.9 ? Eigen::Vector3d::UnitY() : Eigen::Vector3d::UnitX();
    const Eigen::Vector3d n1 = axis.cross(helper).normalized();
    const Eigen::Vector3d n2 = axis.cross(n1);
    const int base = static_cast<int>(s) * per_segment;
    const int parent_of_driver = kParents[seg.driver];

    auto set_weights = [&](int vertex, int ring) {
      if (ring == 0 && parent_of_driver >= 0) {
        model.skin_weights(vertex, seg.driver) = 0.625;
        model.skin_weights(vertex, parent_of_driver) = 0.375;
      } else if (ring == kRings - 1 && seg.end_joint >= 0) {
        model.skin_weights(vertex, seg.driver) = 0.625;
        model.skin_weights(vertex, seg.end_joint) = 0.375;
      } else {
        model.skin_weights(vertex, seg.driver) = 1.0;
      }
    };

    for (int r = 0; r < kRings; ++r) {
      const double t = static_cast<double>(r) / (kRings - 1);
      const Eigen::Vector3d center = seg.start + t * (seg.end - seg.start);
      for (int j = 0; j < kAround; ++j) {
        const double phi = 2.0 * std::numbers::pi * j / kAround;
        const Eigen::Vector3d dir = std::cos(phi) * n1 + std::sin(phi) * n2;
        const int vi = base + r * kAround + j;
        model.template_vertices.row(vi) = (center + seg.radius * dir).transpose();
        radial.row(vi) = dir.transpose();
        set_weights(vi, r);
      }
    }
    // Rounded end caps.
    const int cap0 = base + kRings * kAround;
    const int cap1 = cap0 + 1;
    model.template_vertices.row(cap0) = (seg.start - 0.5 * seg.radius * axis).transpose();
    model.template_vertices.row(cap1) = (seg.end + 0.5 * seg.radius * axis).transpose();
    set_weights(cap0, 0);
    set_weights(cap1, kRings - 1);

    if (!has_regressor[seg.driver]) {
      has_regressor[seg.driver] = true;
      for (int j = 0; j < kAround; ++j) model.joint_regressor(seg.driver, base + j) = 1.0 / kAround;
    }

    // Outward-facing winding: (radial, tangent, axis) is right-handed.
    for (int r = 0; r + 1 < kRings; ++r) {
      for (int j = 0; j < kAround; ++j) {
        const std::uint32_t a0 = base + r * kAround + j;
        const std::uint32_t a1 = base + r * kAround + (j + 1) % kAround;
        const std::uint32_t b0 = a0 + kAround;
        const std::uint32_t b1 = a1 + kAround;
        model.faces.row(face++) << a0, a1, b1;
        model.faces.row(face++) << a0, b1, b0;
      }
    }
    for (int j = 0; j < kAround; ++j) {
      const std::uint32_t a0 = base + j;
      const std::uint32_t a1 = base + (j + 1) % kAround;
      const std::uint32_t b0 = base + (kRings - 1) * kAround + j;
      const std::uint32_t b1 = base + (kRings - 1) * kAround + (j + 1) % kAround;
      model.faces.row(face++) << static_cast<std::uint32_t>(cap0), a1, a0;
      model.faces.row(face++) << static_cast<std::uint32_t>(cap1), b0, b1;
    }
  }

  // Blendshapes: 0 = stature, 1 = girth, 2..9 = seeded smooth linear fields.
  const int s_count = 10;
  model.shape_dirs = Eigen::MatrixXd::Zero(3 * v_count, s_count);
  Rng rng{std::mt19937(seed + 0x5eedu)};
  std::vector<Eigen::Matrix3d> fields(s_count, Eigen::Matrix3d::Zero());
  fields[0].diagonal() << 0.01, 0.06, 0.01;
  for (int s = 2; s < s_count; ++s)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) fields[s](i, j) = 0.03 * rng.symmetric();
  for (int i = 0; i < v_count; ++i) {
    const Eigen::Vector3d v = model.template_vertices.row(i).transpose();
    for (int s = 0; s < s_count; ++s) {
      const Eigen::Vector3d disp = (s == 1) ? Eigen::Vector3d(0.01 * radial.row(i).transpose()) : Eigen::Vector3d(fields[s] * v);
      model.shape_dirs.block<3, 1>(3 * i, s) = disp;
    }
  }

  // Store at float32 precision so a save/load round trip is lossless.
  auto to_float = [](auto& m) { m = m.template cast<float>().template cast<double>(); };
  to_float(model.template_vertices);
  to_float(model.shape_dirs);
  to_float(model.skin_weights);
  to_float(model.joint_regressor);

  model.validate();
  return model;
}

}  // namespace evpose
