#pragma once

#include <array>
#include <vector>

#include "promo/motion/rotation.hpp"
#include "promo/motion/skeleton.hpp"

namespace promo::motion {

constexpr std::size_t kPoseDim = 132;
constexpr std::size_t kFrameDim = 135;
constexpr std::size_t kSequenceFrames = 64;

/// Local pose: block j (6 floats at 6*j) is the rotation of joint j, block 0
/// being the root orientation. No global position.
struct PoseVector {
  std::array<float, kPoseDim> values{};

  static PoseVector identity();
  Mat3 rotation(int joint) const { return sixd_to_rotmat(values.data() + 6 * joint); }
  void set_rotation(int joint, const Mat3& R);
  /// Throws DomainError when any block is degenerate or non-finite.
  void validate() const;
  bool operator==(const PoseVector&) const = default;
};

/// [vx, vy, z, root 6D, body 126]; velocities in meters per frame.
using MotionFrame = std::array<float, kFrameDim>;

struct MotionSequence {
  std::vector<MotionFrame> frames;
  int fps = 20;

  /// Checks frame count >= 2, zero initial planar velocity and valid rotations.
  void validate() const;
  /// validate() plus the fixed 64-frame length used by the models.
  void validate_model_length() const;
  PoseVector pose(std::size_t frame) const;
  bool operator==(const MotionSequence&) const = default;
};

/// World-space motion: root position and the 22 joint rotations per frame.
struct RawMotion {
  std::vector<Vec3> root_position;
  std::vector<std::array<Mat3, kJointCount>> rotations;
};

MotionSequence encode_motion(const RawMotion& raw, int fps);
/// Integrates planar velocities from initial_xy; z is copied.
RawMotion decode_motion(const MotionSequence& seq, const Eigen::Vector2d& initial_xy);

/// Recursive FK: child = parent + G_parent * offset, G_child = G_parent * R_child.
JointPositions forward_kinematics(const PoseVector& pose, const Skeleton& skeleton, const Vec3& root_position);
JointPositions forward_kinematics(const std::array<Mat3, kJointCount>& rotations, const Skeleton& skeleton,
                                  const Vec3& root_position);

/// Root height that puts the lowest joint of the pose at z = 0.
double grounded_root_height(const PoseVector& pose, const Skeleton& skeleton);

/// Left/right mirror across the body's sagittal plane (x -> -x).
PoseVector mirror_pose(const PoseVector& pose);

/// Joint positions of every frame, starting at initial_xy.
std::vector<JointPositions> motion_joint_positions(const MotionSequence& seq, const Skeleton& skeleton,
                                                   const Eigen::Vector2d& initial_xy = Eigen::Vector2d::Zero());

/// Builds a frame from a planar velocity, root height and local pose.
MotionFrame make_frame(double vx, double vy, double z, const PoseVector& pose);

}  // namespace promo::motion
