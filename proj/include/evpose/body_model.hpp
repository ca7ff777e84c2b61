#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "evpose/rotation.hpp"
#include "evpose/types.hpp"

namespace evpose {

/// Parametric articulated mesh: shape blendshapes plus linear blend skinning.
/// Joint order is kinematic-tree order (parent index < child index); joint 0
/// carries the global rotation.
struct BodyModel {
  Points3 template_vertices;       // V x 3, meters
  Eigen::MatrixXd shape_dirs;      // 3V x S, row 3*i + c is coordinate c of vertex i
  Eigen::MatrixXd skin_weights;    // V x K
  Eigen::MatrixXd joint_regressor; // K x V
  std::vector<int> parents;        // parents[0] == -1
  Faces faces;                     // F x 3
  std::vector<std::string> joint_names;
  int pelvis = 0;
  int head = 0;
  int neck = 0;

  int num_vertices() const { return static_cast<int>(template_vertices.rows()); }
  int num_joints() const { return static_cast<int>(parents.size()); }
  int num_shapes() const { return static_cast<int>(shape_dirs.cols()); }

  /// Checks every structural invariant; throws InvariantViolation naming the
  /// first one that fails. Also builds the sparse skinning cache.
  void validate();

  /// Sparse copy of skin_weights, filled by validate().
  Eigen::SparseMatrix<double, Eigen::RowMajor> skin_sparse;
};

struct PoseState {
  std::vector<Rot6d> theta;  // one per joint
  Eigen::VectorXd beta;
  Eigen::Vector3d d = Eigen::Vector3d::Zero();

  static PoseState rest(const BodyModel& model);
};

struct Camera {
  double fx = 200.0;
  double fy = 200.0;
  double cx = 64.0;
  double cy = 64.0;
  int width = 128;
  int height = 128;
};

inline constexpr double kMinDepth = 1e-6;

/// Posed rigid frame of every joint: x_world = rot[k] * x_rest + offset[k].
template <typename Scalar>
struct Skeleton {
  std::vector<Mat3<Scalar>> rot;
  std::vector<Vec3<Scalar>> joint;   // posed joint origin, before global translation
  std::vector<Vec3<Scalar>> offset;  // joint[k] - rot[k] * rest_joint[k]
};

/// Forward kinematics down the tree from per-joint local rotations.
template <typename Scalar>
Skeleton<Scalar> pose_skeleton(const std::vector<Mat3<Scalar>>& local_rot, const Points3& rest_joints,
                               const std::vector<int>& parents) {
  const std::size_t k_count = parents.size();
  Skeleton<Scalar> s;
  s.rot.resize(k_count);
  s.joint.resize(k_count);
  s.offset.resize(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    const Vec3<Scalar> rest = rest_joints.row(k).transpose().template cast<Scalar>();
    const int p = parents[k];
    if (p < 0) {
      s.rot[k] = local_rot[k];
      s.joint[k] = rest;
    } else {
      const Vec3<Scalar> bone = (rest_joints.row(k) - rest_joints.row(p)).transpose().template cast<Scalar>();
      s.rot[k] = s.rot[p] * local_rot[k];
      s.joint[k] = s.rot[p] * bone + s.joint[p];
    }
    s.offset[k] = s.joint[k] - s.rot[k] * rest;
  }
  return s;
}

struct ForwardResult {
  Points3 vertices;  // V x 3
  Points3 joints;    // K x 3
};

/// template + shape_dirs * beta.
Points3 shaped_template(const BodyModel& model, const Eigen::VectorXd& beta);

/// joint_regressor * vertices.
Points3 regress_joints3d(const BodyModel& model, const Points3& vertices);

/// Linear blend skinning of rest vertices by a posed skeleton, plus translation.
Points3 skin_vertices(const BodyModel& model, const Points3& rest_vertices, const Skeleton<double>& skeleton,
                      const Eigen::Vector3d& d);

ForwardResult forward(const BodyModel& model, const PoseState& pose);

/// Pinhole projection; throws BehindCamera for z <= kMinDepth.
Points2 project(const Camera& camera, const Points3& points);
Eigen::Vector2d project_point(const Camera& camera, const Eigen::Vector3d& point);

/// Area-weighted vertex normals (unnormalized sums of face normals).
Points3 vertex_normals(const Faces& faces, const Points3& vertices);

/// Front-facing test: averaged normal has negative z in camera coordinates.
std::vector<bool> visible_vertices(const BodyModel& model, const Points3& vertices, const Camera& camera);
std::vector<bool> visible_vertices(const Faces& faces, const Points3& vertices);

/// Deterministic 24-joint capsule-limb humanoid with 10 synthetic blendshapes.
BodyModel make_mini_body(unsigned seed = 0);

/// model.json manifest + sibling binary blob of float32/u32 arrays.
void save_model(const std::filesystem::path& json_path, const BodyModel& model);
BodyModel load_model(const std::filesystem::path& json_path);

}  // namespace evpose
