#include "evpose/metrics.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include "evpose/error.hpp"

namespace evpose {

namespace {

void require_same_shape(const Points3& a, const Points3& b) {
  if (a.rows() != b.rows() || a.rows() == 0)
    throw Error(Errc::ShapeMismatch,
                "point sets differ in size: " + std::to_string(a.rows()) + " vs " + std::to_string(b.rows()));
}

double mean_distance_mm(const Points3& a, const Points3& b) {
  require_same_shape(a, b);
  return 1000.0 * (a - b).rowwise().norm().mean();
}

void require_index(int index, const Points3& p, const char* what) {
  if (index < 0 || index >= p.rows()) throw Error(Errc::ShapeMismatch, std::string(what) + " index out of range");
}

Points3 pelvis_aligned(const Points3& pred, const Points3& gt, int pelvis) {
  require_same_shape(pred, gt);
  require_index(pelvis, pred, "pelvis");
  Points3 out = pred;
  out.rowwise() += gt.row(pelvis) - pred.row(pelvis);
  return out;
}

}  // namespace

double mpjpe(const Points3& pred, const Points3& gt) { return mean_distance_mm(pred, gt); }

RigidAlignment procrustes_align(const Points3& pred, const Points3& gt) {
  require_same_shape(pred, gt);
  if (pred.rows() < 3) throw Error(Errc::DegenerateConfiguration, "need at least 3 points");
  const Eigen::RowVector3d mu_p = pred.colwise().mean();
  const Eigen::RowVector3d mu_g = gt.colwise().mean();
  const Eigen::MatrixXd p = pred.rowwise() - mu_p;
  const Eigen::MatrixXd g = gt.rowwise() - mu_g;

  Eigen::JacobiSVD<Eigen::MatrixXd> gt_svd(g, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd sg = gt_svd.singularValues();
  if (sg(0) == 0.0 || sg(1) <= 1e-12 * sg(0))
    throw Error(Errc::DegenerateConfiguration, "ground-truth points are collinear");

  const Eigen::Matrix3d cov = g.transpose() * p;  // maps pred onto gt
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d s = Eigen::Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) s(2, 2) = -1.0;

  RigidAlignment out;
  out.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  out.translation = mu_g.transpose() - out.rotation * mu_p.transpose();
  out.aligned = (pred * out.rotation.transpose()).rowwise() + out.translation.transpose();
  return out;
}

double pa_mpjpe(const Points3& pred, const Points3& gt) { return mpjpe(procrustes_align(pred, gt).aligned, gt); }

double pel_mpjpe(const Points3& pred, const Points3& gt, int pelvis) {
  return mpjpe(pelvis_aligned(pred, gt, pelvis), gt);
}

double pckh(const Points3& pred, const Points3& gt, int pelvis, int head, int neck, double fraction) {
  const Points3 aligned = pelvis_aligned(pred, gt, pelvis);
  require_index(head, gt, "head");
  require_index(neck, gt, "neck");
  const double bone = (gt.row(head) - gt.row(neck)).norm();
  if (!(bone > 0.0)) throw Error(Errc::ZeroHeadBone, "head bone has zero length");
  if (gt.rows() < 2) throw Error(Errc::ShapeMismatch, "need joints besides the pelvis");
  const Eigen::VectorXd err = (aligned - gt).rowwise().norm();
  int correct = 0;
  for (Eigen::Index k = 0; k < err.size(); ++k)
    if (k != pelvis && err(k) < fraction * bone) ++correct;
  return static_cast<double>(correct) / static_cast<double>(err.size() - 1);
}

double pve(const Points3& pred_verts, const Points3& gt_verts) { return mean_distance_mm(pred_verts, gt_verts); }

MetricsReport evaluate(const MetricsInput& in, int pelvis, int head, int neck, double fraction) {
  const std::size_t n = in.gt_joints.size();
  if (in.pred_joints.size() != n) throw Error(Errc::ShapeMismatch, "predicted and ground-truth frame counts differ");
  const bool with_verts = !in.gt_verts.empty() || !in.pred_verts.empty();
  if (with_verts && (in.gt_verts.size() != n || in.pred_verts.size() != n))
    throw Error(Errc::ShapeMismatch, "vertex frame counts differ");

  MetricsReport report;
  for (std::size_t i = 0; i < n; ++i) {
    FrameMetrics f;
    f.mpjpe = mpjpe(in.pred_joints[i], in.gt_joints[i]);
    f.pa_mpjpe = pa_mpjpe(in.pred_joints[i], in.gt_joints[i]);
    f.pel_mpjpe = pel_mpjpe(in.pred_joints[i], in.gt_joints[i], pelvis);
    f.pckh = pckh(in.pred_joints[i], in.gt_joints[i], pelvis, head, neck, fraction);
    if (with_verts) f.pve = pve(in.pred_verts[i], in.gt_verts[i]);
    report.frames.push_back(f);
  }
  if (n > 0) {
    for (const FrameMetrics& f : report.frames) {
      report.mean.mpjpe += f.mpjpe;
      report.mean.pa_mpjpe += f.pa_mpjpe;
      report.mean.pel_mpjpe += f.pel_mpjpe;
      report.mean.pckh += f.pckh;
      report.mean.pve += f.pve;
    }
    const double inv = 1.0 / static_cast<double>(n);
    report.mean.mpjpe *= inv;
    report.mean.pa_mpjpe *= inv;
    report.mean.pel_mpjpe *= inv;
    report.mean.pckh *= inv;
    report.mean.pve *= inv;
  }
  return report;
}

}  // namespace evpose
