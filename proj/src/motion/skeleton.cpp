#include "promo/motion/skeleton.hpp"

#include "promo/core/error.hpp"

namespace promo::motion {

const Skeleton& Skeleton::canonical() {
  static const Skeleton s = [] {
    Skeleton k;
    k.parents = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};
    k.names = {"pelvis",     "left_hip",      "right_hip",      "spine1",     "left_knee",   "right_knee",
               "spine2",     "left_ankle",    "right_ankle",    "spine3",     "left_foot",   "right_foot",
               "neck",       "left_collar",   "right_collar",   "head",       "left_shoulder", "right_shoulder",
               "left_elbow", "right_elbow",   "left_wrist",     "right_wrist"};
    k.offsets = {Vec3(0, 0, 0),        Vec3(-0.10, 0, -0.09), Vec3(0.10, 0, -0.09), Vec3(0, 0, 0.11),
                 Vec3(0, 0, -0.40),    Vec3(0, 0, -0.40),     Vec3(0, 0, 0.13),     Vec3(0, 0, -0.40),
                 Vec3(0, 0, -0.40),    Vec3(0, 0, 0.05),      Vec3(0, 0.12, -0.06), Vec3(0, 0.12, -0.06),
                 Vec3(0, 0, 0.22),     Vec3(-0.07, 0, 0.15),  Vec3(0.07, 0, 0.15),  Vec3(0, 0, 0.12),
                 Vec3(-0.11, 0, 0),    Vec3(0.11, 0, 0),      Vec3(-0.26, 0, 0),    Vec3(0.26, 0, 0),
                 Vec3(-0.25, 0, 0),    Vec3(0.25, 0, 0)};
    return k;
  }();
  return s;
}

void Skeleton::validate() const {
  if (parents[0] != -1) throw DomainError("skeleton root must have no parent");
  for (int j = 1; j < kJointCount; ++j) {
    if (parents[j] < 0 || parents[j] >= j) throw DomainError("skeleton parents must precede children");
    if (offsets[j].norm() <= 0.0) throw DomainError("skeleton offset of joint " + std::to_string(j) + " is zero");
  }
}

int Skeleton::mirror_joint(int j) {
  static constexpr std::array<int, kJointCount> m = {0,  2,  1,  3,  5,  4,  6,  8,  7,  9,  11,
                                                     10, 12, 14, 13, 15, 17, 16, 19, 18, 21, 20};
  return m.at(j);
}

}  // namespace promo::motion
