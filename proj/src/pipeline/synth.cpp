#include "promo/pipeline/synth.hpp"

#include <cmath>
#include <numbers>

namespace promo::pipeline {

using motion::Mat3;
using motion::PoseVector;
using motion::rot_x;
using motion::rot_y;
using motion::rot_z;
using motion::Vec3;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double deg(Rng& rng, double lo, double hi) { return rng.uniform(lo, hi) * kDeg; }

/// Arms hang along the body: the rest T-pose arm is turned down about y.
void arms_down(PoseVector& p, Rng& rng) {
  p.set_rotation(motion::kLeftShoulder, rot_y(-deg(rng, 75, 95)));
  p.set_rotation(motion::kRightShoulder, rot_y(deg(rng, 75, 95)));
}

/// Hip flexion moves the thigh forward (+y); knee flexion moves the shin back.
void leg(PoseVector& p, bool left, double hip, double knee) {
  p.set_rotation(left ? motion::kLeftHip : motion::kRightHip, rot_x(hip));
  p.set_rotation(left ? motion::kLeftKnee : motion::kRightKnee, rot_x(-knee));
}

/// Arm pointing forward, optionally raised by `lift` and bent at the elbow.
void arm_forward(PoseVector& p, bool left, double lift, double elbow) {
  const double s = left ? -1.0 : 1.0;
  p.set_rotation(left ? motion::kLeftShoulder : motion::kRightShoulder, rot_z(s * 90 * kDeg) * rot_y(-s * lift));
  p.set_rotation(left ? motion::kLeftElbow : motion::kRightElbow, rot_z(s * elbow));
}

Mat3 jitter(Rng& rng, double stddev_degrees) {
  Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  if (axis.norm() < 1e-9) return Mat3::Identity();
  return Eigen::AngleAxisd(rng.normal(0.0, stddev_degrees * kDeg), axis.normalized()).toRotationMatrix();
}

}  // namespace

std::string_view to_string(PoseTemplate t) {
  switch (t) {
    case PoseTemplate::stand: return "stand";
    case PoseTemplate::t_pose: return "t_pose";
    case PoseTemplate::squat: return "squat";
    case PoseTemplate::reach_up: return "reach_up";
    case PoseTemplate::kneel: return "kneel";
    case PoseTemplate::lift_leg: return "lift_leg";
    case PoseTemplate::stride: return "stride";
    case PoseTemplate::bend_forward: return "bend_forward";
    case PoseTemplate::sit: return "sit";
    case PoseTemplate::wave: return "wave";
  }
  return "unknown";
}

PoseVector synth_pose(PoseTemplate t, Rng& rng) {
  PoseVector p = PoseVector::identity();
  switch (t) {
    case PoseTemplate::stand:
      arms_down(p, rng);
      leg(p, true, deg(rng, -5, 10), deg(rng, 0, 15));
      leg(p, false, deg(rng, -5, 10), deg(rng, 0, 15));
      break;
    case PoseTemplate::t_pose:
      p.set_rotation(motion::kLeftShoulder, rot_y(deg(rng, -10, 10)));
      p.set_rotation(motion::kRightShoulder, rot_y(deg(rng, -10, 10)));
      break;
    case PoseTemplate::squat: {
      const double hip = deg(rng, 60, 120), knee = deg(rng, 70, 140);
      leg(p, true, hip, knee);
      leg(p, false, hip, knee);
      p.set_rotation(motion::kLeftAnkle, rot_x(knee - hip));
      p.set_rotation(motion::kRightAnkle, rot_x(knee - hip));
      p.set_rotation(motion::kSpine1, rot_x(-deg(rng, 0, 40)));
      arm_forward(p, true, deg(rng, -10, 20), deg(rng, 0, 30));
      arm_forward(p, false, deg(rng, -10, 20), deg(rng, 0, 30));
      break;
    }
    case PoseTemplate::reach_up:
      p.set_rotation(motion::kLeftShoulder, rot_y(deg(rng, 60, 95)));
      p.set_rotation(motion::kRightShoulder, rot_y(-deg(rng, 60, 95)));
      p.set_rotation(motion::kLeftElbow, rot_z(-deg(rng, 0, 40)));
      p.set_rotation(motion::kRightElbow, rot_z(deg(rng, 0, 40)));
      break;
    case PoseTemplate::kneel:
      arms_down(p, rng);
      leg(p, true, deg(rng, -5, 10), deg(rng, 80, 110));
      leg(p, false, deg(rng, 80, 100), deg(rng, 80, 100));
      break;
    case PoseTemplate::lift_leg:
      arms_down(p, rng);
      leg(p, true, deg(rng, 50, 100), deg(rng, 30, 110));
      leg(p, false, 0.0, deg(rng, 0, 10));
      break;
    case PoseTemplate::stride:
      leg(p, true, deg(rng, 20, 40), deg(rng, 5, 40));
      leg(p, false, -deg(rng, 10, 30), deg(rng, 0, 20));
      p.set_rotation(motion::kLeftShoulder, rot_y(-deg(rng, 75, 90)) * rot_z(-deg(rng, 0, 30)));
      p.set_rotation(motion::kRightShoulder, rot_y(deg(rng, 75, 90)) * rot_z(deg(rng, 0, 30)));
      break;
    case PoseTemplate::bend_forward:
      arms_down(p, rng);
      p.set_rotation(motion::kSpine1, rot_x(-deg(rng, 40, 70)));
      p.set_rotation(motion::kSpine2, rot_x(-deg(rng, 10, 30)));
      break;
    case PoseTemplate::sit:
      leg(p, true, deg(rng, 80, 100), deg(rng, 80, 100));
      leg(p, false, deg(rng, 80, 100), deg(rng, 80, 100));
      arm_forward(p, true, -deg(rng, 30, 60), deg(rng, 40, 90));
      arm_forward(p, false, -deg(rng, 30, 60), deg(rng, 40, 90));
      break;
    case PoseTemplate::wave:
      p.set_rotation(motion::kLeftShoulder, rot_y(-deg(rng, 75, 95)));
      p.set_rotation(motion::kRightShoulder, rot_y(-deg(rng, 20, 50)));
      p.set_rotation(motion::kRightElbow, rot_y(-deg(rng, 60, 120)));
      break;
  }
  for (int j = 0; j < motion::kJointCount; ++j) p.set_rotation(j, p.rotation(j) * jitter(rng, 3.0));
  if (rng.bernoulli(0.5)) p = motion::mirror_pose(p);
  return p;
}

std::vector<posture::PosturePair> synth_pose_dataset(std::size_t n, std::uint64_t seed) {
  std::vector<posture::PosturePair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, {i}));
    const auto t = static_cast<PoseTemplate>(rng.integer(0, kPoseTemplateCount - 1));
    PoseVector p = synth_pose(t, rng);
    out.push_back({p, script::describe_pose(p)});
  }
  return out;
}

std::string_view to_string(MotionKind k) {
  switch (k) {
    case MotionKind::walk: return "walk";
    case MotionKind::turn: return "turn";
    case MotionKind::squat: return "squat";
    case MotionKind::wave: return "wave";
    case MotionKind::hop: return "hop";
    case MotionKind::idle: return "idle";
  }
  return "unknown";
}

MotionKind motion_kind_from_string(std::string_view s) {
  for (int i = 0; i < kMotionKindCount; ++i)
    if (to_string(static_cast<MotionKind>(i)) == s) return static_cast<MotionKind>(i);
  throw DomainError("unknown motion kind: " + std::string(s));
}

namespace {

/// Legs, arms and torso of one frame of a stepping gait at phase `phase`.
/// amplitude scales the hip swing; arms swing against the legs.
void gait(PoseVector& p, double phase, double amplitude) {
  const double s = std::sin(phase);
  leg(p, true, amplitude * s, 0.1 + 0.6 * amplitude * std::max(0.0, -std::cos(phase)));
  leg(p, false, -amplitude * s, 0.1 + 0.6 * amplitude * std::max(0.0, std::cos(phase)));
  p.set_rotation(motion::kLeftShoulder, rot_y(-85 * kDeg) * rot_z(0.8 * amplitude * s));
  p.set_rotation(motion::kRightShoulder, rot_y(85 * kDeg) * rot_z(0.8 * amplitude * s));
}

}  // namespace

SynthMotion synth_motion(MotionKind kind, Rng& rng, int fps) {
  const std::size_t n = motion::kSequenceFrames;
  const double dt = 1.0 / fps;
  const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double phase0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const motion::Skeleton& sk = motion::Skeleton::canonical();

  // Kind-specific parameters.
  const double speed = rng.uniform(0.8, 1.6);                        // walk, m/s
  const double turn = rng.uniform(60.0, 180.0) * kDeg * (rng.bernoulli(0.5) ? 1.0 : -1.0);
  const double cycles = rng.uniform(1.0, 2.0);                       // squat, wave, hop repetitions
  const double depth = rng.uniform(0.5, 1.0);                        // squat depth, hop height scale
  const bool left_arm = rng.bernoulli(0.5);
  const double sway = rng.uniform(0.02, 0.06);                       // idle amplitude, rad
  const double arm_left = deg(rng, 75, 95), arm_right = deg(rng, 75, 95);

  SynthMotion m{kind, {}, {}};
  Vec3 root(0.0, 0.0, 0.0);
  for (std::size_t f = 0; f < n; ++f) {
    const double t = static_cast<double>(f) * dt;
    const double u = static_cast<double>(f) / static_cast<double>(n - 1);
    PoseVector p = PoseVector::identity();
    double yaw = heading, lift = 0.0;
    p.set_rotation(motion::kLeftShoulder, rot_y(-arm_left));
    p.set_rotation(motion::kRightShoulder, rot_y(arm_right));
    switch (kind) {
      case MotionKind::walk: {
        const double cadence = 0.9 + 0.5 * (speed - 0.8);  // strides per second
        gait(p, phase0 + 2.0 * std::numbers::pi * cadence * t, (20.0 + 15.0 * (speed - 0.8) / 0.8) * kDeg);
        break;
      }
      case MotionKind::turn:
        gait(p, phase0 + 2.0 * std::numbers::pi * 0.8 * t, 10.0 * kDeg);
        yaw = heading + turn * u;
        break;
      case MotionKind::squat: {
        const double a = depth * std::pow(std::sin(std::numbers::pi * cycles * u), 2);
        leg(p, true, a * 100 * kDeg, a * 120 * kDeg);
        leg(p, false, a * 100 * kDeg, a * 120 * kDeg);
        p.set_rotation(motion::kLeftAnkle, rot_x(a * 20 * kDeg));
        p.set_rotation(motion::kRightAnkle, rot_x(a * 20 * kDeg));
        p.set_rotation(motion::kSpine1, rot_x(-a * 30 * kDeg));
        break;
      }
      case MotionKind::wave: {
        const double side = left_arm ? 1.0 : -1.0;
        p.set_rotation(left_arm ? motion::kLeftShoulder : motion::kRightShoulder, rot_y(side * 70 * kDeg));
        p.set_rotation(left_arm ? motion::kLeftElbow : motion::kRightElbow,
                       rot_y(side * (30 + 25 * std::sin(2.0 * std::numbers::pi * 2.0 * cycles * u)) * kDeg));
        break;
      }
      case MotionKind::hop: {
        const double c = std::sin(2.0 * std::numbers::pi * cycles * u + phase0);
        const double crouch = depth * std::max(0.0, -c);
        leg(p, true, crouch * 50 * kDeg, crouch * 80 * kDeg);
        leg(p, false, crouch * 50 * kDeg, crouch * 80 * kDeg);
        lift = 0.25 * depth * std::max(0.0, c);
        break;
      }
      case MotionKind::idle:
        p.set_rotation(motion::kSpine1, rot_y(sway * std::sin(2.0 * std::numbers::pi * 0.4 * t + phase0)));
        break;
    }
    p.set_rotation(motion::kPelvis, rot_z(yaw));
    if (kind == MotionKind::walk && f > 0) {
      root.x() += -std::sin(heading) * speed * dt;
      root.y() += std::cos(heading) * speed * dt;
    }
    root.z() = motion::grounded_root_height(p, sk) + lift;
    m.raw.root_position.push_back(root);
    std::array<motion::Mat3, motion::kJointCount> rots;
    for (int j = 0; j < motion::kJointCount; ++j) rots[j] = p.rotation(j);
    m.raw.rotations.push_back(rots);
  }
  m.sequence = motion::encode_motion(m.raw, fps);
  return m;
}

std::vector<SynthMotion> synth_motion_dataset(std::size_t n, std::uint64_t seed, std::vector<MotionKind> kinds,
                                              int fps) {
  if (kinds.empty())
    for (int i = 0; i < kMotionKindCount; ++i) kinds.push_back(static_cast<MotionKind>(i));
  std::vector<SynthMotion> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, {i}));
    const auto k = kinds[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(kinds.size() - 1)))];
    out.push_back(synth_motion(k, rng, fps));
  }
  return out;
}

std::vector<eval::MotionTextPair> synth_motion_text_dataset(std::size_t n, std::uint64_t seed, std::size_t keyposes) {
  std::vector<eval::MotionTextPair> out;
  for (auto& m : synth_motion_dataset(n, seed)) {
    eval::MotionTextPair p{std::move(m.sequence), {}};
    for (const auto& pose : go::extract_keyposes(p.motion, keyposes).poses) p.text.push_back(script::describe_pose(pose));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace promo::pipeline
