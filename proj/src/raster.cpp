#include <algorithm>
#include <cmath>
#include <limits>

#include "evpose/error.hpp"
#include "evpose/simulator.hpp"

namespace evpose {

namespace {

double edge(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& p) {
  return (b.x() - a.x()) * (p.y() - a.y()) - (b.y() - a.y()) * (p.x() - a.x());
}

}  // namespace

Raster rasterize(const Faces& faces, const Points3& vertices, const Camera& camera) {
  Raster r;
  r.height = camera.height;
  r.width = camera.width;
  const std::size_t n = static_cast<std::size_t>(r.height) * r.width;
  r.face.assign(n, -1);
  r.bary.assign(n, Eigen::Vector3d::Zero());
  r.depth.assign(n, std::numeric_limits<double>::infinity());

  std::vector<Eigen::Vector2d> screen(vertices.rows());
  for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
    const double z = vertices(i, 2);
    if (z > kMinDepth)
      screen[i] = {camera.fx * vertices(i, 0) / z + camera.cx, camera.fy * vertices(i, 1) / z + camera.cy};
  }

  for (Eigen::Index f = 0; f < faces.rows(); ++f) {
    const std::uint32_t i0 = faces(f, 0), i1 = faces(f, 1), i2 = faces(f, 2);
    const double z0 = vertices(i0, 2), z1 = vertices(i1, 2), z2 = vertices(i2, 2);
    if (z0 <= kMinDepth || z1 <= kMinDepth || z2 <= kMinDepth) continue;
    const Eigen::Vector2d &p0 = screen[i0], &p1 = screen[i1], &p2 = screen[i2];
    const double area = edge(p0, p1, p2);
    if (std::abs(area) < 1e-12) continue;

    const int x_lo = std::max(0, static_cast<int>(std::ceil(std::min({p0.x(), p1.x(), p2.x()}))));
    const int x_hi = std::min(r.width - 1, static_cast<int>(std::floor(std::max({p0.x(), p1.x(), p2.x()}))));
    const int y_lo = std::max(0, static_cast<int>(std::ceil(std::min({p0.y(), p1.y(), p2.y()}))));
    const int y_hi = std::min(r.height - 1, static_cast<int>(std::floor(std::max({p0.y(), p1.y(), p2.y()}))));
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const Eigen::Vector2d p(x, y);
        const Eigen::Vector3d w(edge(p1, p2, p) / area, edge(p2, p0, p) / area, edge(p0, p1, p) / area);
        if (w.minCoeff() < 0.0) continue;
        const double z = 1.0 / (w(0) / z0 + w(1) / z1 + w(2) / z2);
        const std::size_t idx = static_cast<std::size_t>(y) * r.width + x;
        if (z < r.depth[idx]) {
          r.depth[idx] = z;
          r.face[idx] = static_cast<int>(f);
          r.bary[idx] = w;
        }
      }
    }
  }
  return r;
}

Image render_intensity(const Faces& faces, const Points3& vertices, const Camera& camera,
                       const RenderOptions& options) {
  if (vertices.rows() > 0 && !(vertices.col(2).array() > kMinDepth).any())
    throw Error(Errc::BehindCamera, "the whole body is behind the camera");
  if (!options.albedo.empty() && static_cast<Eigen::Index>(options.albedo.size()) != vertices.rows())
    throw Error(Errc::DimensionMismatch, "albedo length differs from the vertex count");

  const int s = std::max(1, options.supersample);
  Camera fine = camera;
  fine.fx = camera.fx * s;
  fine.fy = camera.fy * s;
  // Sample centers of output pixel x sit at x + (k + 0.5) / s - 0.5.
  fine.cx = camera.cx * s + 0.5 * (s - 1);
  fine.cy = camera.cy * s + 0.5 * (s - 1);
  fine.width = camera.width * s;
  fine.height = camera.height * s;

  const Raster r = rasterize(faces, vertices, fine);
  Points3 normals = vertex_normals(faces, vertices);
  for (Eigen::Index i = 0; i < normals.rows(); ++i) {
    const double len = normals.row(i).norm();
    if (len > 0.0) normals.row(i) /= len;
  }
  const Eigen::Vector3d light = options.light.normalized();

  Image fine_image = Image::Constant(fine.height, fine.width, kBackground);
  for (int y = 0; y < fine.height; ++y) {
    for (int x = 0; x < fine.width; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * fine.width + x;
      const int f = r.face[idx];
      if (f < 0) continue;
      const Eigen::Vector3d& w = r.bary[idx];
      Eigen::Vector3d n = Eigen::Vector3d::Zero();
      double albedo = 0.0;
      for (int j = 0; j < 3; ++j) {
        const std::uint32_t vi = faces(f, j);
        n += w(j) * normals.row(vi).transpose();
        albedo += w(j) * (options.albedo.empty() ? 1.0 : options.albedo[vi]);
      }
      const double len = n.norm();
      const double lambert = len > 0.0 ? std::max(0.0, n.dot(light) / len) : 0.0;
      fine_image(y, x) = albedo * (options.ambient + (1.0 - options.ambient) * lambert);
    }
  }

  Image out(camera.height, camera.width);
  const double inv = 1.0 / (s * s);
  for (int y = 0; y < camera.height; ++y)
    for (int x = 0; x < camera.width; ++x) out(y, x) = fine_image.block(y * s, x * s, s, s).sum() * inv;
  return out;
}

Image render_intensity(const BodyModel& model, const PoseState& pose, const Camera& camera,
                       const RenderOptions& options) {
  return render_intensity(model.faces, forward(model, pose).vertices, camera, options);
}

FlowField ground_truth_flow(const BodyModel& model, const PoseState& prev, const PoseState& cur,
                            const Camera& camera) {
  const Points3 before = forward(model, prev).vertices;
  const Points3 after = forward(model, cur).vertices;
  FlowField flow(camera.height, camera.width);
  const Raster r = rasterize(model.faces, before, camera);
  Points2 shape = Points2::Zero(before.rows(), 2);
  for (Eigen::Index i = 0; i < before.rows(); ++i) {
    if (before(i, 2) <= kMinDepth || after(i, 2) <= kMinDepth) continue;
    shape.row(i) = (project_point(camera, after.row(i).transpose()) - project_point(camera, before.row(i).transpose()))
                       .transpose();
  }
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const int f = r.at(y, x);
      if (f < 0) continue;
      const Eigen::Vector3d& w = r.bary[static_cast<std::size_t>(y) * camera.width + x];
      Eigen::Vector2d value = Eigen::Vector2d::Zero();
      for (int j = 0; j < 3; ++j) value += w(j) * shape.row(model.faces(f, j)).transpose();
      flow.u(y, x) = value.x();
      flow.v(y, x) = value.y();
    }
  }
  return flow;
}

}  // namespace evpose
