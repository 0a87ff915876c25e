#include "promo/pipeline/export.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace promo::pipeline {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

/// Nine significant digits (enough to round-trip a float), with -0 written as 0.
std::string num(double v) {
  if (v == 0.0) v = 0.0;
  std::ostringstream s;
  s.precision(9);
  s << v;
  return s.str();
}

void write_joint(std::ostringstream& out, const motion::Skeleton& sk, int j, int depth) {
  const std::string indent(2 * static_cast<std::size_t>(depth), ' ');
  const auto& o = sk.offsets[static_cast<std::size_t>(j)];
  if (j == 0) {
    out << "ROOT " << sk.names[0] << "\n{\n";
    out << "  OFFSET 0 0 0\n";
    out << "  CHANNELS 6 Xposition Yposition Zposition Zrotation Yrotation Xrotation\n";
  } else {
    out << indent << "JOINT " << sk.names[static_cast<std::size_t>(j)] << "\n" << indent << "{\n";
    out << indent << "  OFFSET " << num(o.x()) << ' ' << num(o.y()) << ' ' << num(o.z()) << "\n";
    out << indent << "  CHANNELS 3 Zrotation Yrotation Xrotation\n";
  }
  bool leaf = true;
  for (int c = 0; c < motion::kJointCount; ++c)
    if (sk.parents[static_cast<std::size_t>(c)] == j && c != j) {
      leaf = false;
      write_joint(out, sk, c, depth + 1);
    }
  if (leaf) out << indent << "  End Site\n" << indent << "  {\n" << indent << "    OFFSET 0 0 0\n" << indent << "  }\n";
  out << indent << "}\n";
}

void hierarchy_order(const motion::Skeleton& sk, int j, std::vector<int>& order) {
  order.push_back(j);
  for (int c = 0; c < motion::kJointCount; ++c)
    if (sk.parents[static_cast<std::size_t>(c)] == j && c != j) hierarchy_order(sk, c, order);
}

}  // namespace

std::string_view to_string(ExportFormat f) {
  switch (f) {
    case ExportFormat::json: return "json";
    case ExportFormat::csv: return "csv";
    case ExportFormat::bvh: return "bvh";
  }
  return "json";
}

ExportFormat export_format_from_string(std::string_view s) {
  for (auto f : {ExportFormat::json, ExportFormat::csv, ExportFormat::bvh})
    if (to_string(f) == s) return f;
  throw DomainError("export: unknown format " + std::string(s) + " (expected json, csv or bvh)");
}

std::array<double, 3> euler_zyx(const motion::Mat3& R) {
  const double sy = std::clamp(-R(2, 0), -1.0, 1.0);
  const double y = std::asin(sy);
  if (std::abs(sy) > 1.0 - 1e-12) return {std::atan2(-R(0, 1), R(1, 1)), y, 0.0};
  return {std::atan2(R(1, 0), R(0, 0)), y, std::atan2(R(2, 1), R(2, 2))};
}

std::array<std::string, motion::kFrameDim> frame_channel_names() {
  std::array<std::string, motion::kFrameDim> names;
  names[0] = "vx";
  names[1] = "vy";
  names[2] = "z";
  const auto& sk = motion::Skeleton::canonical();
  for (int j = 0; j < motion::kJointCount; ++j)
    for (int k = 0; k < 6; ++k)
      names[static_cast<std::size_t>(3 + 6 * j + k)] =
          std::string(sk.names[static_cast<std::size_t>(j)]) + "_r" + std::to_string(k);
  return names;
}

std::string export_json(const MotionRecord& record) { return motion_record_json(record) + "\n"; }

std::string export_csv(const motion::MotionSequence& seq) {
  std::string out;
  const auto names = frame_channel_names();
  for (std::size_t c = 0; c < names.size(); ++c) out += (c ? "," : "") + names[c];
  out += '\n';
  for (const auto& frame : seq.frames) {
    for (std::size_t c = 0; c < frame.size(); ++c) out += (c ? "," : "") + num(frame[c]);
    out += '\n';
  }
  return out;
}

std::string export_bvh(const motion::MotionSequence& seq) {
  seq.validate();
  const auto& sk = motion::Skeleton::canonical();
  std::ostringstream out;
  out << "HIERARCHY\n";
  write_joint(out, sk, 0, 0);
  std::vector<int> order;
  hierarchy_order(sk, 0, order);

  const auto raw = motion::decode_motion(seq, Eigen::Vector2d::Zero());
  out << "MOTION\nFrames: " << seq.frames.size() << "\nFrame Time: " << num(1.0 / seq.fps) << "\n";
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const auto& p = raw.root_position[f];
    out << num(p.x()) << ' ' << num(p.y()) << ' ' << num(p.z());
    for (int j : order) {
      const auto e = euler_zyx(raw.rotations[f][static_cast<std::size_t>(j)]);
      out << ' ' << num(e[0] * kRadToDeg) << ' ' << num(e[1] * kRadToDeg) << ' ' << num(e[2] * kRadToDeg);
    }
    out << '\n';
  }
  return out.str();
}

std::string export_motion(const MotionRecord& record, ExportFormat format) {
  switch (format) {
    case ExportFormat::json: return export_json(record);
    case ExportFormat::csv: return export_csv(record.motion);
    case ExportFormat::bvh: return export_bvh(record.motion);
  }
  throw DomainError("export: unknown format");
}

std::filesystem::path export_motion_file(const std::filesystem::path& in, ExportFormat format,
                                         std::filesystem::path out) {
  const auto records = read_motion_dataset(in);
  if (records.size() != 1)
    throw DomainError("export: " + in.string() + " holds " + std::to_string(records.size()) + " motions, expected 1");
  if (out.empty()) {
    out = in;
    out.replace_extension(to_string(format));
    if (out == in) out.replace_extension(std::string(".export.") + std::string(to_string(format)));
  }
  const std::string text = export_motion(records.front(), format);
  std::ofstream file(out, std::ios::binary);
  file << text;
  if (!file) throw DomainError("export: cannot write " + out.string());
  return out;
}

}  // namespace promo::pipeline
