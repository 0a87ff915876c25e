#include "doctest.h"

#include <cmath>

#include "promo/core/error.hpp"
#include "promo/core/rng.hpp"
#include "promo/motion/motion.hpp"

using namespace promo;
using namespace promo::motion;

namespace {

Mat3 random_rotation(Rng& rng) {
  Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  return q.normalized().toRotationMatrix();
}

PoseVector random_pose(Rng& rng) {
  PoseVector p;
  for (int j = 0; j < kJointCount; ++j) p.set_rotation(j, random_rotation(rng));
  return p;
}

RawMotion random_raw(Rng& rng, std::size_t frames) {
  RawMotion raw;
  Vec3 pos(rng.uniform(-5, 5), rng.uniform(-5, 5), 0.9);
  for (std::size_t f = 0; f < frames; ++f) {
    pos += Vec3(rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), 0.0);
    raw.root_position.push_back(Vec3(pos.x(), pos.y(), rng.uniform(0.5, 1.0)));
    std::array<Mat3, kJointCount> r;
    for (auto& m : r) m = random_rotation(rng);
    raw.rotations.push_back(r);
  }
  return raw;
}

}  // namespace

TEST_CASE("6D to rotation matrix") {
  CHECK(sixd_to_rotmat(Rotation6D{1, 0, 0, 0, 1, 0}).isApprox(Mat3::Identity(), 1e-15));
  const Mat3 R = sixd_to_rotmat(Rotation6D{2, 0, 0, 1, 1, 0});
  CHECK(R.col(0).isApprox(Vec3(1, 0, 0)));
  CHECK(R.col(1).isApprox(Vec3(0, 1, 0)));
  CHECK(R.col(2).isApprox(Vec3(0, 0, 1)));
  CHECK_THROWS_AS(sixd_to_rotmat(Rotation6D{0, 0, 0, 0, 1, 0}), DomainError);
  CHECK_THROWS_AS(sixd_to_rotmat(Rotation6D{1, 0, 0, 2, 1e-5, 0}), DomainError);
  CHECK_NOTHROW(sixd_to_rotmat(Rotation6D{1, 0, 0, 1, 1e-2, 0}));
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    Rotation6D r;
    for (auto& v : r) v = rng.normal();
    const Mat3 M = sixd_to_rotmat(r);
    CHECK((M.transpose() * M - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-5);
    CHECK(std::abs(M.determinant() - 1.0) < 1e-5);
  }
}

TEST_CASE("rotation matrix to 6D") {
  const Rotation6D id = rotmat_to_sixd(Mat3::Identity());
  CHECK(id == Rotation6D{1, 0, 0, 0, 1, 0});
  const Rotation6D z90 = rotmat_to_sixd(rot_z(M_PI / 2));
  const Rotation6D expected{0, 1, 0, -1, 0, 0};
  for (int i = 0; i < 6; ++i) CHECK(z90[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  CHECK_THROWS_AS(rotmat_to_sixd(2.0 * Mat3::Identity()), DomainError);
  CHECK_THROWS_AS(rotmat_to_sixd(Eigen::Vector3d(-1, 1, 1).asDiagonal().toDenseMatrix()), DomainError);
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const Mat3 R = random_rotation(rng);
    CHECK((sixd_to_rotmat(rotmat_to_sixd(R)) - R).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("encode and decode motion") {
  SUBCASE("stationary trajectory has zero velocity") {
    RawMotion raw;
    for (int f = 0; f < 5; ++f) {
      raw.root_position.emplace_back(1, 2, 0.9);
      raw.rotations.push_back({});
      raw.rotations.back().fill(Mat3::Identity());
    }
    const auto seq = encode_motion(raw, 20);
    for (const auto& fr : seq.frames) {
      CHECK(fr[0] == 0.0f);
      CHECK(fr[1] == 0.0f);
    }
  }
  SUBCASE("straight walk") {
    RawMotion raw;
    for (int f = 0; f < 6; ++f) {
      raw.root_position.emplace_back(0.25 * f, 0, 0.9);
      raw.rotations.push_back({});
      raw.rotations.back().fill(Mat3::Identity());
    }
    const auto seq = encode_motion(raw, 20);
    CHECK(seq.frames[0][0] == 0.0f);
    for (std::size_t f = 1; f < 6; ++f) {
      CHECK(seq.frames[f][0] == 0.25f);
      CHECK(seq.frames[f][1] == 0.0f);
    }
    const auto back = decode_motion(seq, {0, 0});
    for (int f = 0; f < 6; ++f) CHECK(back.root_position[f].x() == doctest::Approx(0.25 * f));
  }
  SUBCASE("unit velocities integrate to a ramp") {
    MotionSequence seq;
    for (int f = 0; f < 4; ++f) seq.frames.push_back(make_frame(f == 0 ? 0 : 1, 0, 0.9, PoseVector::identity()));
    const auto raw = decode_motion(seq, {0, 0});
    for (int f = 0; f < 4; ++f) CHECK(raw.root_position[f].isApprox(Vec3(f, 0, 0.9f)));
  }
  SUBCASE("random round trips") {
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
      const RawMotion raw = random_raw(rng, 64);
      const auto seq = encode_motion(raw, 20);
      CHECK_NOTHROW(seq.validate_model_length());
      const auto back = decode_motion(seq, raw.root_position[0].head<2>());
      for (std::size_t f = 0; f < 64; ++f) {
        CHECK((back.root_position[f] - raw.root_position[f]).cwiseAbs().maxCoeff() < 1e-6);
        for (int j = 0; j < kJointCount; ++j)
          CHECK((back.rotations[f][j] - raw.rotations[f][j]).cwiseAbs().maxCoeff() < 1e-6);
      }
      const auto again = encode_motion(back, 20);
      for (std::size_t f = 0; f < 64; ++f)
        for (std::size_t c = 0; c < kFrameDim; ++c) CHECK(std::abs(again.frames[f][c] - seq.frames[f][c]) < 1e-6);
    }
  }
  SUBCASE("planar translation leaves the encoding unchanged") {
    Rng rng(4);
    RawMotion raw = random_raw(rng, 10);
    RawMotion moved = raw;
    for (auto& p : moved.root_position) p += Vec3(3.0, -7.0, 0.0);
    const auto a = encode_motion(raw, 20), b = encode_motion(moved, 20);
    for (std::size_t f = 0; f < 10; ++f)
      for (std::size_t c = 0; c < kFrameDim; ++c) CHECK(std::abs(a.frames[f][c] - b.frames[f][c]) < 1e-6);
  }
  SUBCASE("errors") {
    RawMotion one;
    one.root_position.emplace_back(0, 0, 0);
    one.rotations.push_back({});
    CHECK_THROWS_AS(encode_motion(one, 20), DomainError);
    MotionSequence seq;
    for (int f = 0; f < 3; ++f) seq.frames.push_back(make_frame(1, 0, 0.9, PoseVector::identity()));
    CHECK_THROWS_AS(seq.validate(), DomainError);
    seq.frames[0][0] = 0;
    CHECK_NOTHROW(seq.validate());
    CHECK_THROWS_AS(seq.validate_model_length(), DomainError);
  }
}

TEST_CASE("forward kinematics") {
  const Skeleton& sk = Skeleton::canonical();
  CHECK_NOTHROW(sk.validate());
  SUBCASE("identity pose gives cumulative offsets") {
    const auto p = forward_kinematics(PoseVector::identity(), sk, Vec3(0, 0, 1));
    for (int j = 1; j < kJointCount; ++j) {
      Vec3 expect = Vec3(0, 0, 1);
      for (int k = j; k > 0; k = sk.parents[k]) expect += sk.offsets[k];
      CHECK((p[j] - expect).norm() < 1e-12);
    }
    CHECK(grounded_root_height(PoseVector::identity(), sk) == doctest::Approx(0.95));
  }
  SUBCASE("root rotation rotates the body about the root") {
    Rng rng(5);
    PoseVector pose = random_pose(rng);
    const Vec3 root(0.3, -0.2, 0.9);
    const auto a = forward_kinematics(pose, sk, root);
    const Mat3 R = random_rotation(rng);
    pose.set_rotation(0, R * pose.rotation(0));
    const auto b = forward_kinematics(pose, sk, root);
    for (int j = 0; j < kJointCount; ++j) CHECK((b[j] - (root + R * (a[j] - root))).norm() < 1e-6);
  }
  SUBCASE("bent elbow places the wrist by hand trigonometry") {
    PoseVector pose = PoseVector::identity();
    pose.set_rotation(kLeftElbow, rot_z(-M_PI / 2));
    auto p = forward_kinematics(pose, sk, Vec3::Zero());
    CHECK((p[kLeftWrist] - Vec3(-0.44, 0.25, 0.44)).norm() < 1e-6);
    pose.set_rotation(kLeftElbow, rot_z(-M_PI / 6));
    p = forward_kinematics(pose, sk, Vec3::Zero());
    CHECK((p[kLeftWrist] - Vec3(-0.44 - 0.25 * std::sqrt(3.0) / 2, 0.125, 0.44)).norm() < 1e-6);
  }
  SUBCASE("bone lengths are preserved") {
    Rng rng(6);
    for (int i = 0; i < 50; ++i) {
      const auto p = forward_kinematics(random_pose(rng), sk, Vec3(rng.normal(), rng.normal(), rng.normal()));
      for (int j = 1; j < kJointCount; ++j)
        CHECK(std::abs((p[j] - p[sk.parents[j]]).norm() - sk.offsets[j].norm()) < 1e-6);
    }
  }
}

TEST_CASE("mirroring reflects joint positions") {
  Rng rng(7);
  const Skeleton& sk = Skeleton::canonical();
  const PoseVector pose = random_pose(rng);
  const auto a = forward_kinematics(pose, sk, Vec3::Zero());
  const auto b = forward_kinematics(mirror_pose(pose), sk, Vec3::Zero());
  for (int j = 0; j < kJointCount; ++j) {
    const Vec3 m = a[Skeleton::mirror_joint(j)];
    CHECK((b[j] - Vec3(-m.x(), m.y(), m.z())).norm() < 1e-5);
  }
}
