#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "evpose/body_model.hpp"
#include "evpose/losses.hpp"

namespace evpose {

/// How joint rotations are written: 6 numbers (first two matrix columns) or
/// 4 numbers (unit axis, angle).
enum class RotationFormat { Rot6d, AxisAngle };

RotationFormat parse_rotation_format(const std::string& name);
std::string format_name(RotationFormat format);

nlohmann::ordered_json pose_to_json(const PoseState& pose, RotationFormat format = RotationFormat::Rot6d);
PoseState pose_from_json(const nlohmann::ordered_json& j);

/// {"format", "poses": [...]}; a single-pose file is an object with "theta".
void write_poses(const std::filesystem::path& path, std::span<const PoseState> poses,
                 RotationFormat format = RotationFormat::Rot6d);
std::vector<PoseState> read_poses(const std::filesystem::path& path);

void write_pose(const std::filesystem::path& path, const PoseState& pose,
                RotationFormat format = RotationFormat::Rot6d);
PoseState read_pose(const std::filesystem::path& path);

void write_targets(const std::filesystem::path& path, const SequenceTarget& targets);
SequenceTarget read_targets(const std::filesystem::path& path);

nlohmann::ordered_json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace evpose
