#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <string_view>

#include "promo/pipeline/dataset.hpp"

namespace promo::pipeline {

enum class ExportFormat { json, csv, bvh };

std::string_view to_string(ExportFormat f);
/// Throws DomainError for anything but json, csv and bvh.
ExportFormat export_format_from_string(std::string_view s);

/// The record row exactly as a dataset would store it.
std::string export_json(const MotionRecord& record);
/// Header of 135 channel names, then one row per frame.
std::string export_csv(const motion::MotionSequence& seq);
/// HIERARCHY from the canonical skeleton offsets (z up, meters), then MOTION
/// with the decoded world root position and per-joint ZYX Euler angles in
/// degrees, one line per frame at the sequence's fps.
std::string export_bvh(const motion::MotionSequence& seq);

std::string export_motion(const MotionRecord& record, ExportFormat format);
/// Reads the single motion in `in`, writes `out` and returns its path. An
/// empty `out` replaces the extension of `in` with the format name.
std::filesystem::path export_motion_file(const std::filesystem::path& in, ExportFormat format,
                                         std::filesystem::path out = {});

/// Angles (z, y, x) in radians with R = Rz(z) Ry(y) Rx(x); y lies in
/// [-pi/2, pi/2] and x is set to 0 at gimbal lock.
std::array<double, 3> euler_zyx(const motion::Mat3& R);

/// Channel names of the 135-dim frame feature: vx, vy, z, then
/// <joint>_r0..<joint>_r5 for each joint.
std::array<std::string, motion::kFrameDim> frame_channel_names();

}  // namespace promo::pipeline
