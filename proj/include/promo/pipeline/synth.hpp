#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "promo/core/rng.hpp"
#include "promo/eval/features.hpp"
#include "promo/motion/motion.hpp"
#include "promo/posture/denoiser.hpp"

namespace promo::pipeline {

enum class PoseTemplate { stand, t_pose, squat, reach_up, kneel, lift_leg, stride, bend_forward, sit, wave };
inline constexpr int kPoseTemplateCount = 10;

std::string_view to_string(PoseTemplate t);

/// One randomized instance of a template: template-specific joint angles are
/// drawn from ranges, every joint gets a small random rotation and the pose is
/// mirrored with probability 1/2.
motion::PoseVector synth_pose(PoseTemplate t, Rng& rng);

/// n (pose, describe_pose(pose)) pairs with templates drawn uniformly.
std::vector<posture::PosturePair> synth_pose_dataset(std::size_t n, std::uint64_t seed);

enum class MotionKind { walk, turn, squat, wave, hop, idle };
inline constexpr int kMotionKindCount = 6;

std::string_view to_string(MotionKind k);
MotionKind motion_kind_from_string(std::string_view s);

/// A 64-frame motion together with its exact root trajectory. Only walks
/// translate; every kind faces a random heading and keeps its feet grounded.
struct SynthMotion {
  MotionKind kind;
  motion::RawMotion raw;
  motion::MotionSequence sequence;
};

SynthMotion synth_motion(MotionKind kind, Rng& rng, int fps = 20);

/// n motions with kinds drawn uniformly from `kinds` (all kinds when empty).
std::vector<SynthMotion> synth_motion_dataset(std::size_t n, std::uint64_t seed, std::vector<MotionKind> kinds = {},
                                              int fps = 20);

/// Motions of synth_motion_dataset paired with describe_pose of their
/// `keyposes` evenly spaced keyposes, the text a perfect planner would emit.
std::vector<eval::MotionTextPair> synth_motion_text_dataset(std::size_t n, std::uint64_t seed,
                                                            std::size_t keyposes = 4);

}  // namespace promo::pipeline
