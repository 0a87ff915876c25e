#pragma once

#include <array>
#include <string_view>

#include "promo/motion/rotation.hpp"

namespace promo::motion {

constexpr int kJointCount = 22;

/// Joint order of the 22-joint body tree; index 0 is the root (pelvis).
enum Joint : int {
  kPelvis = 0,
  kLeftHip,
  kRightHip,
  kSpine1,
  kLeftKnee,
  kRightKnee,
  kSpine2,
  kLeftAnkle,
  kRightAnkle,
  kSpine3,
  kLeftFoot,
  kRightFoot,
  kNeck,
  kLeftCollar,
  kRightCollar,
  kHead,
  kLeftShoulder,
  kRightShoulder,
  kLeftElbow,
  kRightElbow,
  kLeftWrist,
  kRightWrist,
};

/// Axes: z up, +y forward, +x toward the body's right side.
struct Skeleton {
  std::array<int, kJointCount> parents{};
  std::array<Vec3, kJointCount> offsets{};
  std::array<std::string_view, kJointCount> names{};

  /// Fixed-offset skeleton about 1.7 m tall in a T-pose rest configuration.
  static const Skeleton& canonical();
  /// Throws DomainError unless the parents form a tree rooted at joint 0 and
  /// every non-root offset is nonzero.
  void validate() const;
  /// Index of the left/right counterpart (itself for central joints).
  static int mirror_joint(int j);
};

using JointPositions = std::array<Vec3, kJointCount>;

}  // namespace promo::motion
