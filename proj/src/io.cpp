#include "evpose/io.hpp"

#include <fstream>
#include <sstream>

#include "evpose/error.hpp"

namespace evpose {

using nlohmann::ordered_json;

namespace {

template <typename Derived>
ordered_json row_array(const Eigen::MatrixBase<Derived>& m) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index i = 0; i < m.size(); ++i) out.push_back(m(i));
  return out;
}

template <typename M>
ordered_json matrix_rows(const M& m) {
  ordered_json out = ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(row_array(m.row(r)));
  return out;
}

std::vector<double> numbers(const ordered_json& j, std::size_t expected, const char* what) {
  if (!j.is_array() || (expected != 0 && j.size() != expected))
    throw Error(Errc::SchemaViolation, std::string(what) + ": expected an array of " + std::to_string(expected));
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw Error(Errc::SchemaViolation, std::string(what) + ": non-numeric entry");
    out.push_back(v.get<double>());
  }
  return out;
}

Eigen::Vector3d vec3(const ordered_json& j, const char* what) {
  const auto v = numbers(j, 3, what);
  return {v[0], v[1], v[2]};
}

template <int C>
Eigen::Matrix<double, Eigen::Dynamic, C, Eigen::RowMajor> points(const ordered_json& j, const char* what) {
  if (!j.is_array()) throw Error(Errc::SchemaViolation, std::string(what) + ": expected rows");
  Eigen::Matrix<double, Eigen::Dynamic, C, Eigen::RowMajor> out(j.size(), C);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const auto v = numbers(j[r], C, what);
    for (int c = 0; c < C; ++c) out(r, c) = v[c];
  }
  return out;
}

ordered_json rotation_to_json(const Rot6d& r, RotationFormat format) {
  if (format == RotationFormat::Rot6d) return ordered_json::array({r.a(0), r.a(1), r.a(2), r.b(0), r.b(1), r.b(2)});
  const Eigen::Vector3d aa = matrix_to_axis_angle(rot6d_to_matrix(r));
  const double angle = aa.norm();
  const Eigen::Vector3d axis = angle > 0.0 ? Eigen::Vector3d(aa / angle) : Eigen::Vector3d::UnitX();
  return ordered_json::array({axis(0), axis(1), axis(2), angle});
}

Rot6d rotation_from_json(const ordered_json& j, RotationFormat format) {
  if (format == RotationFormat::Rot6d) {
    const auto v = numbers(j, 6, "theta");
    Rot6d r;
    r.a << v[0], v[1], v[2];
    r.b << v[3], v[4], v[5];
    return r;
  }
  const auto v = numbers(j, 4, "theta");
  const Eigen::Vector3d axis(v[0], v[1], v[2]);
  if (v[3] == 0.0) return Rot6d::identity();
  if (axis.norm() == 0.0) throw Error(Errc::SchemaViolation, "theta: zero rotation axis with nonzero angle");
  return matrix_to_rot6d(axis_angle_to_matrix(axis.normalized() * v[3]));
}

std::vector<Rot6d> theta_from_json(const ordered_json& j, RotationFormat format) {
  if (!j.is_array()) throw Error(Errc::SchemaViolation, "theta: expected one entry per joint");
  std::vector<Rot6d> out;
  for (const auto& r : j) out.push_back(rotation_from_json(r, format));
  return out;
}

const ordered_json& field(const ordered_json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw Error(Errc::SchemaViolation, std::string("missing field '") + key + "'");
  return j.at(key);
}

}  // namespace

RotationFormat parse_rotation_format(const std::string& name) {
  if (name == "rot6d") return RotationFormat::Rot6d;
  if (name == "axis_angle") return RotationFormat::AxisAngle;
  throw Error(Errc::SchemaViolation, "unknown rotation format '" + name + "'");
}

std::string format_name(RotationFormat format) {
  return format == RotationFormat::Rot6d ? "rot6d" : "axis_angle";
}

ordered_json pose_to_json(const PoseState& pose, RotationFormat format) {
  ordered_json j;
  j["format"] = format_name(format);
  ordered_json theta = ordered_json::array();
  for (const Rot6d& r : pose.theta) theta.push_back(rotation_to_json(r, format));
  j["theta"] = std::move(theta);
  j["d"] = row_array(pose.d);
  j["beta"] = row_array(pose.beta);
  return j;
}

PoseState pose_from_json(const ordered_json& j) {
  const RotationFormat format =
      j.contains("format") ? parse_rotation_format(j.at("format").get<std::string>()) : RotationFormat::Rot6d;
  PoseState pose;
  pose.theta = theta_from_json(field(j, "theta"), format);
  pose.d = vec3(field(j, "d"), "d");
  const auto beta = numbers(field(j, "beta"), 0, "beta");
  pose.beta = Eigen::Map<const Eigen::VectorXd>(beta.data(), static_cast<Eigen::Index>(beta.size()));
  return pose;
}

void write_poses(const std::filesystem::path& path, std::span<const PoseState> poses, RotationFormat format) {
  ordered_json j;
  j["format"] = format_name(format);
  ordered_json list = ordered_json::array();
  for (const PoseState& p : poses) {
    ordered_json pj = pose_to_json(p, format);
    pj.erase("format");
    list.push_back(std::move(pj));
  }
  j["poses"] = std::move(list);
  write_json(path, j);
}

std::vector<PoseState> read_poses(const std::filesystem::path& path) {
  const ordered_json j = read_json(path);
  if (j.contains("theta")) return {pose_from_json(j)};
  const std::string format = j.contains("format") ? j.at("format").get<std::string>() : "rot6d";
  std::vector<PoseState> out;
  for (ordered_json p : field(j, "poses")) {
    p["format"] = format;
    out.push_back(pose_from_json(p));
  }
  return out;
}

void write_pose(const std::filesystem::path& path, const PoseState& pose, RotationFormat format) {
  write_json(path, pose_to_json(pose, format));
}

PoseState read_pose(const std::filesystem::path& path) {
  const auto poses = read_poses(path);
  if (poses.size() != 1) throw Error(Errc::SchemaViolation, path.string() + ": expected a single pose");
  return poses.front();
}

void write_targets(const std::filesystem::path& path, const SequenceTarget& targets) {
  ordered_json steps = ordered_json::array();
  for (std::size_t t = 0; t < targets.steps(); ++t) {
    ordered_json s;
    s["d"] = row_array(targets.d[t]);
    ordered_json theta = ordered_json::array();
    for (const Rot6d& r : targets.theta[t]) theta.push_back(rotation_to_json(r, RotationFormat::Rot6d));
    s["theta"] = std::move(theta);
    s["joints3d"] = matrix_rows(targets.joints3d[t]);
    s["joints2d"] = matrix_rows(targets.joints2d[t]);
    steps.push_back(std::move(s));
  }
  ordered_json j;
  j["steps"] = std::move(steps);
  write_json(path, j);
}

SequenceTarget read_targets(const std::filesystem::path& path) {
  const ordered_json j = read_json(path);
  SequenceTarget out;
  for (const auto& s : field(j, "steps")) {
    out.d.push_back(vec3(field(s, "d"), "d"));
    out.theta.push_back(theta_from_json(field(s, "theta"), RotationFormat::Rot6d));
    out.joints3d.push_back(points<3>(field(s, "joints3d"), "joints3d"));
    out.joints2d.push_back(points<2>(field(s, "joints2d"), "joints2d"));
  }
  return out;
}

ordered_json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaViolation, path.string() + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::IoError, "write failed for " + path.string());
}

void write_json(const std::filesystem::path& path, const ordered_json& j) { write_text(path, j.dump(2) + "\n"); }

}  // namespace evpose
