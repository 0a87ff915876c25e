#include "promo/motion/motion.hpp"

#include <algorithm>
#include <limits>

#include "promo/core/error.hpp"

namespace promo::motion {

PoseVector PoseVector::identity() {
  PoseVector p;
  for (int j = 0; j < kJointCount; ++j) p.set_rotation(j, Mat3::Identity());
  return p;
}

void PoseVector::set_rotation(int joint, const Mat3& R) {
  const Rotation6D r = rotmat_to_sixd(R);
  for (int i = 0; i < 6; ++i) values[6 * joint + i] = static_cast<float>(r[i]);
}

void PoseVector::validate() const {
  for (int j = 0; j < kJointCount; ++j) {
    if (!valid_sixd(values.data() + 6 * j)) throw DomainError("pose block " + std::to_string(j) + " is degenerate");
  }
}

void MotionSequence::validate() const {
  if (frames.size() < 2) throw DomainError("motion needs at least 2 frames");
  if (frames[0][0] != 0.0f || frames[0][1] != 0.0f) throw DomainError("frame 0 must have zero planar velocity");
  for (std::size_t f = 0; f < frames.size(); ++f) {
    for (float v : frames[f])
      if (!std::isfinite(v)) throw DomainError("non-finite value in frame " + std::to_string(f));
    for (int j = 0; j < kJointCount; ++j)
      if (!valid_sixd(frames[f].data() + 3 + 6 * j))
        throw DomainError("degenerate rotation in frame " + std::to_string(f));
  }
}

void MotionSequence::validate_model_length() const {
  if (frames.size() != kSequenceFrames) {
    throw DomainError("motion must have exactly 64 frames, got " + std::to_string(frames.size()));
  }
  validate();
}

PoseVector MotionSequence::pose(std::size_t frame) const {
  PoseVector p;
  std::copy(frames.at(frame).begin() + 3, frames.at(frame).end(), p.values.begin());
  return p;
}

MotionFrame make_frame(double vx, double vy, double z, const PoseVector& pose) {
  MotionFrame f{};
  f[0] = static_cast<float>(vx);
  f[1] = static_cast<float>(vy);
  f[2] = static_cast<float>(z);
  std::copy(pose.values.begin(), pose.values.end(), f.begin() + 3);
  return f;
}

MotionSequence encode_motion(const RawMotion& raw, int fps) {
  const std::size_t n = raw.root_position.size();
  if (n < 2) throw DomainError("encode_motion needs at least 2 frames");
  if (raw.rotations.size() != n) throw ShapeError("root positions and rotations differ in frame count");
  MotionSequence seq;
  seq.fps = fps;
  seq.frames.reserve(n);
  for (std::size_t f = 0; f < n; ++f) {
    PoseVector pose;
    for (int j = 0; j < kJointCount; ++j) pose.set_rotation(j, raw.rotations[f][j]);
    const Vec3& p = raw.root_position[f];
    const double vx = f == 0 ? 0.0 : p.x() - raw.root_position[f - 1].x();
    const double vy = f == 0 ? 0.0 : p.y() - raw.root_position[f - 1].y();
    seq.frames.push_back(make_frame(vx, vy, p.z(), pose));
  }
  return seq;
}

RawMotion decode_motion(const MotionSequence& seq, const Eigen::Vector2d& initial_xy) {
  seq.validate();
  RawMotion raw;
  double x = initial_xy.x(), y = initial_xy.y();
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    const MotionFrame& fr = seq.frames[f];
    x += fr[0];
    y += fr[1];
    raw.root_position.emplace_back(x, y, fr[2]);
    std::array<Mat3, kJointCount> rots;
    for (int j = 0; j < kJointCount; ++j) rots[j] = sixd_to_rotmat(fr.data() + 3 + 6 * j);
    raw.rotations.push_back(rots);
  }
  return raw;
}

JointPositions forward_kinematics(const std::array<Mat3, kJointCount>& rotations, const Skeleton& skeleton,
                                  const Vec3& root_position) {
  JointPositions pos;
  std::array<Mat3, kJointCount> global;
  for (int j = 0; j < kJointCount; ++j) {
    const int p = skeleton.parents[j];
    if (p < 0) {
      global[j] = rotations[j];
      pos[j] = root_position;
    } else {
      global[j] = global[p] * rotations[j];
      pos[j] = pos[p] + global[p] * skeleton.offsets[j];
    }
  }
  return pos;
}

JointPositions forward_kinematics(const PoseVector& pose, const Skeleton& skeleton, const Vec3& root_position) {
  std::array<Mat3, kJointCount> rots;
  for (int j = 0; j < kJointCount; ++j) rots[j] = pose.rotation(j);
  return forward_kinematics(rots, skeleton, root_position);
}

double grounded_root_height(const PoseVector& pose, const Skeleton& skeleton) {
  const JointPositions p = forward_kinematics(pose, skeleton, Vec3::Zero());
  double lowest = std::numeric_limits<double>::infinity();
  for (const Vec3& v : p) lowest = std::min(lowest, v.z());
  return -lowest;
}

PoseVector mirror_pose(const PoseVector& pose) {
  const Mat3 M = Eigen::Vector3d(-1, 1, 1).asDiagonal();
  PoseVector out;
  for (int j = 0; j < kJointCount; ++j) out.set_rotation(Skeleton::mirror_joint(j), M * pose.rotation(j) * M);
  return out;
}

std::vector<JointPositions> motion_joint_positions(const MotionSequence& seq, const Skeleton& skeleton,
                                                   const Eigen::Vector2d& initial_xy) {
  const RawMotion raw = decode_motion(seq, initial_xy);
  std::vector<JointPositions> out;
  out.reserve(raw.root_position.size());
  for (std::size_t f = 0; f < raw.root_position.size(); ++f)
    out.push_back(forward_kinematics(raw.rotations[f], skeleton, raw.root_position[f]));
  return out;
}

}  // namespace promo::motion
