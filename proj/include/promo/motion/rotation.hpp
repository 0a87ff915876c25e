#pragma once

#include <array>

#include <Eigen/Dense>

namespace promo::motion {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// First two columns of a rotation matrix, column-major: [c1x c1y c1z c2x c2y c2z].
using Rotation6D = std::array<double, 6>;

/// Gram-Schmidt reconstruction. Throws DomainError when the first column is
/// near zero or the two columns are within 1e-4 rad of parallel.
Mat3 sixd_to_rotmat(const double* r);
Mat3 sixd_to_rotmat(const float* r);
inline Mat3 sixd_to_rotmat(const Rotation6D& r) { return sixd_to_rotmat(r.data()); }

/// Throws DomainError unless R is a rotation within 1e-3.
Rotation6D rotmat_to_sixd(const Mat3& R);

/// True when sixd_to_rotmat would accept the block.
bool valid_sixd(const float* r);

Mat3 rot_x(double radians);
Mat3 rot_y(double radians);
Mat3 rot_z(double radians);

/// Angle of the relative rotation between two matrices, in radians.
double rotation_angle_between(const Mat3& a, const Mat3& b);

}  // namespace promo::motion
