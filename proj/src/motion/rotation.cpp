#include "promo/motion/rotation.hpp"

#include <algorithm>
#include <cmath>

#include "promo/core/error.hpp"

namespace promo::motion {
namespace {

constexpr double kMinNorm = 1e-6;
constexpr double kMinAngle = 1e-4;

bool degenerate(const Vec3& a, const Vec3& b) {
  const double na = a.norm(), nb = b.norm();
  if (na < kMinNorm || nb < kMinNorm) return true;
  const double angle = std::atan2(a.cross(b).norm(), a.dot(b));
  return angle <= kMinAngle || angle >= M_PI - kMinAngle;
}

template <class S>
Mat3 from_sixd(const S* r) {
  const Vec3 a(r[0], r[1], r[2]);
  const Vec3 b(r[3], r[4], r[5]);
  if (!a.allFinite() || !b.allFinite()) throw DomainError("6D rotation contains non-finite values");
  if (degenerate(a, b)) throw DomainError("degenerate 6D rotation: zero or parallel columns");
  const Vec3 c1 = a.normalized();
  const Vec3 c2 = (b - c1 * c1.dot(b)).normalized();
  Mat3 R;
  R.col(0) = c1;
  R.col(1) = c2;
  R.col(2) = c1.cross(c2);
  return R;
}

}  // namespace

Mat3 sixd_to_rotmat(const double* r) { return from_sixd(r); }
Mat3 sixd_to_rotmat(const float* r) { return from_sixd(r); }

bool valid_sixd(const float* r) {
  const Vec3 a(r[0], r[1], r[2]);
  const Vec3 b(r[3], r[4], r[5]);
  return a.allFinite() && b.allFinite() && !degenerate(a, b);
}

Rotation6D rotmat_to_sixd(const Mat3& R) {
  if (!R.allFinite() || (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-3 ||
      std::abs(R.determinant() - 1.0) > 1e-3) {
    throw DomainError("matrix is not a rotation");
  }
  return {R(0, 0), R(1, 0), R(2, 0), R(0, 1), R(1, 1), R(2, 1)};
}

Mat3 rot_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
Mat3 rot_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
Mat3 rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

}  // namespace promo::motion
