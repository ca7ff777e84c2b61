#include "evpose/body_model.hpp"

#include <cmath>
#include <string>

#include "evpose/error.hpp"

namespace evpose {

namespace {

[[noreturn]] void violation(const std::string& what) { throw Error(Errc::InvariantViolation, what); }

}  // namespace

void BodyModel::validate() {
  const Eigen::Index v_count = template_vertices.rows();
  const Eigen::Index k_count = static_cast<Eigen::Index>(parents.size());
  if (v_count == 0 || k_count == 0) violation("model has no vertices or no joints");
  if (shape_dirs.rows() != 3 * v_count) violation("shape_dirs rows != 3V");
  if (skin_weights.rows() != v_count || skin_weights.cols() != k_count) violation("skin_weights is not V x K");
  if (joint_regressor.rows() != k_count || joint_regressor.cols() != v_count)
    violation("joint_regressor is not K x V");
  if (!template_vertices.allFinite() || !shape_dirs.allFinite()) violation("non-finite geometry");

  if (parents[0] != -1) violation("parents[0] must be -1 (root)");
  for (Eigen::Index k = 1; k < k_count; ++k)
    if (parents[k] < 0 || parents[k] >= k) violation("parents must satisfy 0 <= parent < child (joint " +
                                                     std::to_string(k) + ")");

  for (Eigen::Index i = 0; i < v_count; ++i) {
    if ((skin_weights.row(i).array() < 0.0).any()) violation("skin_weights row " + std::to_string(i) + " negative");
    if (std::abs(skin_weights.row(i).sum() - 1.0) > 1e-6)
      violation("skin_weights row " + std::to_string(i) + " does not sum to 1");
  }
  for (Eigen::Index k = 0; k < k_count; ++k)
    if (std::abs(joint_regressor.row(k).sum() - 1.0) > 1e-6)
      violation("joint_regressor row " + std::to_string(k) + " does not sum to 1");

  for (Eigen::Index f = 0; f < faces.rows(); ++f)
    for (int c = 0; c < 3; ++c)
      if (faces(f, c) >= static_cast<std::uint32_t>(v_count)) violation("face index out of range");

  for (int j : {pelvis, head, neck})
    if (j < 0 || j >= k_count) violation("metadata joint index out of range");
  if (!joint_names.empty() && static_cast<Eigen::Index>(joint_names.size()) != k_count)
    violation("joint_names length != K");

  skin_sparse = skin_weights.sparseView();
  skin_sparse.makeCompressed();
}

PoseState PoseState::rest(const BodyModel& model) {
  PoseState pose;
  pose.theta.assign(model.num_joints(), Rot6d::identity());
  pose.beta = Eigen::VectorXd::Zero(model.num_shapes());
  return pose;
}

Points3 shaped_template(const BodyModel& model, const Eigen::VectorXd& beta) {
  if (beta.size() != model.num_shapes())
    throw Error(Errc::DimensionMismatch, "beta has " + std::to_string(beta.size()) + " coefficients, model has " +
                                             std::to_string(model.num_shapes()));
  const Eigen::VectorXd offsets = model.shape_dirs * beta;
  Points3 out = model.template_vertices;
  out += Eigen::Map<const Points3>(offsets.data(), out.rows(), 3);
  return out;
}

Points3 regress_joints3d(const BodyModel& model, const Points3& vertices) {
  if (vertices.rows() != model.joint_regressor.cols())
    throw Error(Errc::DimensionMismatch, "vertex count does not match the joint regressor");
  return model.joint_regressor * vertices;
}

Points3 skin_vertices(const BodyModel& model, const Points3& rest_vertices, const Skeleton<double>& skeleton,
                      const Eigen::Vector3d& d) {
  const auto& weights = model.skin_sparse;
  Points3 out(rest_vertices.rows(), 3);
  for (Eigen::Index i = 0; i < rest_vertices.rows(); ++i) {
    const Eigen::Vector3d rest = rest_vertices.row(i).transpose();
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(weights, i); it; ++it)
      acc += it.value() * (skeleton.rot[it.col()] * rest + skeleton.offset[it.col()]);
    out.row(i) = (acc + d).transpose();
  }
  return out;
}

ForwardResult forward(const BodyModel& model, const PoseState& pose) {
  if (static_cast<int>(pose.theta.size()) != model.num_joints())
    throw Error(Errc::DimensionMismatch, "pose has wrong joint count");
  const Points3 rest = shaped_template(model, pose.beta);
  const Points3 rest_joints = regress_joints3d(model, rest);
  std::vector<Mat3<double>> local(pose.theta.size());
  for (std::size_t k = 0; k < local.size(); ++k) local[k] = rot6d_to_matrix(pose.theta[k]);
  const Skeleton<double> skeleton = pose_skeleton(local, rest_joints, model.parents);

  ForwardResult result;
  result.vertices = skin_vertices(model, rest, skeleton, pose.d);
  result.joints.resize(model.num_joints(), 3);
  for (int k = 0; k < model.num_joints(); ++k) result.joints.row(k) = (skeleton.joint[k] + pose.d).transpose();
  return result;
}

Eigen::Vector2d project_point(const Camera& camera, const Eigen::Vector3d& point) {
  if (!(point.z() > kMinDepth)) throw Error(Errc::BehindCamera, "point at depth " + std::to_string(point.z()));
  return {camera.fx * point.x() / point.z() + camera.cx, camera.fy * point.y() / point.z() + camera.cy};
}

Points2 project(const Camera& camera, const Points3& points) {
  Points2 out(points.rows(), 2);
  for (Eigen::Index i = 0; i < points.rows(); ++i) out.row(i) = project_point(camera, points.row(i).transpose());
  return out;
}

Points3 vertex_normals(const Faces& faces, const Points3& vertices) {
  Points3 normals = Points3::Zero(vertices.rows(), 3);
  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    const Eigen::Vector3d a = vertices.row(faces(f, 0));
    const Eigen::Vector3d b = vertices.row(faces(f, 1));
    const Eigen::Vector3d c = vertices.row(faces(f, 2));
    // Cross product length is twice the area, so the sum is area-weighted.
    const Eigen::RowVector3d n = (b - a).cross(c - a).transpose();
    for (int j = 0; j < 3; ++j) normals.row(faces(f, j)) += n;
  }
  return normals;
}

std::vector<bool> visible_vertices(const Faces& faces, const Points3& vertices) {
  const Points3 normals = vertex_normals(faces, vertices);
  std::vector<bool> mask(vertices.rows());
  for (Eigen::Index i = 0; i < vertices.rows(); ++i) mask[i] = normals(i, 2) < 0.0;
  return mask;
}

std::vector<bool> visible_vertices(const BodyModel& model, const Points3& vertices, const Camera&) {
  // The camera sits at the origin looking down +z, so camera and world
  // coordinates coincide.
  return visible_vertices(model.faces, vertices);
}

}  // namespace evpose
