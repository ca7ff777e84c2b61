#pragma once

#include <vector>

#include "evpose/types.hpp"

namespace evpose {

/// Mean per-joint Euclidean distance in millimeters (inputs in meters).
double mpjpe(const Points3& pred, const Points3& gt);

struct RigidAlignment {
  Mat3<double> rotation = Mat3<double>::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Points3 aligned;  // rotation * pred + translation
};

/// Least-squares rigid (no scale) alignment of pred onto gt.
RigidAlignment procrustes_align(const Points3& pred, const Points3& gt);

double pa_mpjpe(const Points3& pred, const Points3& gt);
double pel_mpjpe(const Points3& pred, const Points3& gt, int pelvis = 0);

/// Fraction of non-pelvis joints whose pelvis-aligned 3D error is strictly
/// below `fraction` times the ground-truth head bone |gt[head] - gt[neck]|.
/// The pelvis itself is the alignment anchor and is not scored.
double pckh(const Points3& pred, const Points3& gt, int pelvis, int head, int neck, double fraction = 0.5);

/// Mean per-vertex Euclidean distance in millimeters.
double pve(const Points3& pred_verts, const Points3& gt_verts);

struct FrameMetrics {
  double mpjpe = 0.0;
  double pa_mpjpe = 0.0;
  double pel_mpjpe = 0.0;
  double pckh = 0.0;
  double pve = 0.0;
};

struct MetricsReport {
  FrameMetrics mean;
  std::vector<FrameMetrics> frames;
};

struct MetricsInput {
  std::vector<Points3> pred_joints, gt_joints;
  std::vector<Points3> pred_verts, gt_verts;
};

MetricsReport evaluate(const MetricsInput& input, int pelvis, int head, int neck, double fraction = 0.5);

}  // namespace evpose
