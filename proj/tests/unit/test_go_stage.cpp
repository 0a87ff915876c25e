#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "promo/go/go.hpp"
#include "promo/pipeline/synth.hpp"

using namespace promo;
using namespace promo::go;
using motion::MotionSequence;
using motion::PoseVector;

namespace {

GoDenoiserConfig tiny_config() {
  GoDenoiserConfig c;
  c.latent = 16;
  c.heads = 2;
  c.layers = 1;
  c.ffn = 32;
  c.diffusion_steps = 10;
  return c;
}

std::vector<MotionSequence> motions(std::size_t n, std::uint64_t seed) {
  std::vector<MotionSequence> out;
  for (auto& m : pipeline::synth_motion_dataset(n, seed)) out.push_back(m.sequence);
  return out;
}

PoseVector pose_with(int joint, const motion::Mat3& R) {
  PoseVector p = PoseVector::identity();
  p.set_rotation(joint, R);
  return p;
}

bool same_weights(const GoDenoiser& a, const GoDenoiser& b) {
  if (a.parameters().size() != b.parameters().size()) return false;
  auto ib = b.parameters().begin();
  for (const auto& p : a.parameters())
    if (!(p.value == (ib++)->value)) return false;
  return true;
}

}  // namespace

TEST_CASE("keyframe indices are centered in equal spans") {
  CHECK(keyframe_indices(1) == std::vector<int>{32});
  CHECK(keyframe_indices(4) == std::vector<int>{8, 24, 40, 56});
  CHECK(keyframe_indices(2, 10) == std::vector<int>{2, 7});
  for (std::size_t F = 1; F <= kMaxKeyposes; ++F) {
    const auto idx = keyframe_indices(F);
    REQUIRE(idx.size() == F);
    CHECK(idx.front() >= 0);
    CHECK(idx.back() < 64);
    for (std::size_t k = 1; k < F; ++k) CHECK(idx[k] > idx[k - 1]);
  }
}

TEST_CASE("keypose conditions hold between 1 and 16 poses") {
  KeyposeCondition c;
  CHECK_THROWS_AS(c.validate(), DomainError);
  c.poses.assign(16, PoseVector::identity());
  CHECK_NOTHROW(c.validate());
  c.poses.push_back(PoseVector::identity());
  CHECK_THROWS_AS(c.validate(), DomainError);
}

TEST_CASE("extracted keyposes are the poses at the keyframes") {
  const auto seq = motions(1, 4).front();
  for (std::size_t F : {1u, 3u, 8u}) {
    const auto k = extract_keyposes(seq, F);
    const auto idx = keyframe_indices(F);
    REQUIRE(k.poses.size() == F);
    for (std::size_t i = 0; i < F; ++i) CHECK(k.poses[i] == seq.pose(static_cast<std::size_t>(idx[i])));
  }
}

TEST_CASE("constant motion yields identical keyposes") {
  const PoseVector p = pose_with(5, motion::rot_x(0.4));
  MotionSequence seq;
  for (int f = 0; f < 64; ++f) seq.frames.push_back(motion::make_frame(0.0, 0.0, 0.9, p));
  const auto k = extract_keyposes(seq, 6);
  for (const auto& q : k.poses) CHECK(q == seq.pose(0));
}

TEST_CASE("a single keypose baseline is constant") {
  const PoseVector p = pose_with(3, motion::rot_y(0.7));
  const auto seq = interpolate_baseline({{p}});
  seq.validate_model_length();
  const double z = motion::grounded_root_height(p, motion::Skeleton::canonical());
  for (const auto& f : seq.frames) {
    CHECK(f[0] == 0.0f);
    CHECK(f[1] == 0.0f);
    CHECK(f[2] == doctest::Approx(z).epsilon(1e-6));
    CHECK(f == seq.frames.front());
  }
}

TEST_CASE("baseline slerps between keyposes and copies them at keyframes") {
  const int joint = 7;
  const PoseVector a = pose_with(joint, motion::Mat3::Identity());
  const PoseVector b = pose_with(joint, motion::rot_z(std::numbers::pi / 2));
  const auto seq = interpolate_baseline({{a, b}});
  // Keyframes 16 and 48; frame 32 sits halfway.
  CHECK(seq.pose(16) == a);
  CHECK(seq.pose(48) == b);
  CHECK(seq.pose(0) == a);
  CHECK(seq.pose(63) == b);
  const motion::Mat3 mid = seq.pose(32).rotation(joint);
  CHECK(motion::rotation_angle_between(mid, motion::Mat3::Identity()) ==
        doctest::Approx(std::numbers::pi / 4).epsilon(1e-5));
  CHECK((mid - motion::rot_z(std::numbers::pi / 4)).norm() < 1e-5);
  // Joints that do not move stay at identity throughout.
  CHECK((seq.pose(32).rotation(2) - motion::Mat3::Identity()).norm() < 1e-6);
}

TEST_CASE("feature statistics fit, floor and serialize") {
  const PoseVector p = PoseVector::identity();
  MotionSequence s1, s2;
  for (int f = 0; f < 64; ++f) {
    s1.frames.push_back(motion::make_frame(f == 0 ? 0.0 : 1.0, 0.0, 1.0, p));
    s2.frames.push_back(motion::make_frame(f == 0 ? 0.0 : 3.0, 0.0, 1.0, p));
  }
  const auto st = FeatureStats::fit({s1, s2});
  // vx: 63 frames of 1, 63 of 3 and two zeros.
  const double mean = (63.0 * 1 + 63.0 * 3) / 128.0;
  const double var = (2 * mean * mean + 63 * (1 - mean) * (1 - mean) + 63 * (3 - mean) * (3 - mean)) / 128.0;
  CHECK(st.mean[0] == doctest::Approx(mean).epsilon(1e-6));
  CHECK(st.stddev[0] == doctest::Approx(std::sqrt(var)).epsilon(1e-5));
  CHECK(st.mean[2] == doctest::Approx(1.0));
  CHECK(st.stddev[2] == doctest::Approx(1e-2));
  const auto back = FeatureStats::from_json(st.to_json());
  CHECK(back.mean == st.mean);
  CHECK(back.stddev == st.stddev);
}

TEST_CASE("go config validates and round-trips") {
  auto c = tiny_config();
  CHECK_NOTHROW(c.validate());
  const auto back = GoDenoiserConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  c.latent = 15;
  CHECK_THROWS(c.validate());
}

TEST_CASE("normalize and denormalize are inverse") {
  const auto data = motions(8, 2);
  GoDenoiser model(tiny_config(), FeatureStats::fit(data), 3);
  const auto x = model.normalize(data[1]);
  const auto back = model.denormalize(x.data(), data[1].fps);
  for (std::size_t f = 0; f < 64; ++f)
    for (std::size_t c = 0; c < motion::kFrameDim; ++c)
      CHECK(back.frames[f][c] == doctest::Approx(data[1].frames[f][c]).epsilon(1e-5));
}

TEST_CASE("go denoiser output shape and condition handling") {
  const auto data = motions(4, 2);
  GoDenoiser model(tiny_config(), FeatureStats::fit(data), 3);
  nn::Tape<float> tape(nn::Tape<float>::Options{.train = false, .record = false});
  nn::Tensor<float> x({3, 64, motion::kFrameDim});
  for (std::size_t b = 0; b < 3; ++b) {
    const auto n = model.normalize(data[b]);
    std::copy(n.values().begin(), n.values().end(), x.data() + b * 64 * motion::kFrameDim);
  }
  const auto k1 = extract_keyposes(data[0], 2);
  const auto k2 = extract_keyposes(data[1], 5);
  auto out = model.forward(tape, tape.constant(x), {1, 5, 9}, {&k1, nullptr, &k2});
  CHECK(tape.value(out).shape() == nn::Shape{3, 64, motion::kFrameDim});
  CHECK(tape.value(out).all_finite());
  CHECK_THROWS_AS(model.forward(tape, tape.constant(x), {1, 5}, {&k1, nullptr, &k2}), ShapeError);
  CHECK_THROWS_AS(model.forward(tape, tape.constant(x), {1, 5}, {&k1, nullptr}), ShapeError);
}

TEST_CASE("same seed gives the same initial weights") {
  const auto data = motions(4, 2);
  const auto st = FeatureStats::fit(data);
  GoDenoiser a(tiny_config(), st, 9), b(tiny_config(), st, 9), c(tiny_config(), st, 10);
  CHECK(same_weights(a, b));
  CHECK_FALSE(same_weights(a, c));
}

TEST_CASE("generation is seeded, valid and starts at rest") {
  const auto data = motions(4, 2);
  GoDenoiser model(tiny_config(), FeatureStats::fit(data), 3);
  const auto k = extract_keyposes(data[0], 4);
  const auto a = generate_motion(model, k, 2.0, 17);
  const auto b = generate_motion(model, k, 2.0, 17);
  const auto c = generate_motion(model, k, 2.0, 18);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  CHECK_NOTHROW(a.validate_model_length());
  CHECK(a.frames[0][0] == 0.0f);
  CHECK(a.frames[0][1] == 0.0f);

  const auto batch = generate_motions(model, {k, extract_keyposes(data[1], 2)}, 2.0, {17, 18});
  // Same noise streams; only the GEMM blocking differs with the batch size.
  const auto single = generate_motion(model, extract_keyposes(data[1], 2), 2.0, 18);
  double gap = 0.0;
  for (std::size_t f = 0; f < 64; ++f)
    for (std::size_t c = 0; c < motion::kFrameDim; ++c)
      gap = std::max({gap, std::abs(double(batch[0].frames[f][c]) - a.frames[f][c]),
                      std::abs(double(batch[1].frames[f][c]) - single.frames[f][c])});
  CHECK(gap < 1e-3);
  CHECK_THROWS_AS(generate_motions(model, {k}, 2.0, {1, 2}), ShapeError);
}

TEST_CASE("zero guidance ignores the keyposes") {
  const auto data = motions(4, 2);
  GoDenoiser model(tiny_config(), FeatureStats::fit(data), 3);
  const auto a = generate_motion(model, extract_keyposes(data[0], 3), 0.0, 5);
  const auto b = generate_motion(model, extract_keyposes(data[2], 3), 0.0, 5);
  CHECK(a == b);
  const auto c = generate_motion(model, extract_keyposes(data[0], 3), 1.0, 5);
  const auto d = generate_motion(model, extract_keyposes(data[2], 3), 1.0, 5);
  CHECK_FALSE(c == d);
}

TEST_CASE("go training is deterministic and lowers the loss") {
  const auto data = motions(32, 6);
  GoTrainConfig tc;
  tc.epochs = 6;
  tc.batch = 8;
  tc.optimizer.lr = 1e-3;
  const auto a = train_go_diffuser(data, tiny_config(), tc, 21);
  const auto b = train_go_diffuser(data, tiny_config(), tc, 21);
  REQUIRE(a.loss_history.size() == 6);
  CHECK(a.loss_history == b.loss_history);
  CHECK(same_weights(*a.model, *b.model));
  CHECK(a.loss_history.back() < a.loss_history.front());

  tc.epochs = 0;
  const auto z = train_go_diffuser(data, tiny_config(), tc, 21);
  CHECK(z.loss_history.empty());
  GoDenoiser fresh(tiny_config(), FeatureStats::fit(data), derive_seed(21, {0}));
  CHECK(same_weights(*z.model, fresh));
}

TEST_CASE("go training rejects bad inputs") {
  GoTrainConfig tc;
  CHECK_THROWS_AS(train_go_diffuser({}, tiny_config(), tc, 1), DomainError);
  const auto data = motions(4, 2);
  tc.min_keyposes = 0;
  CHECK_THROWS_AS(train_go_diffuser(data, tiny_config(), tc, 1), DomainError);
  tc.min_keyposes = 3;
  tc.max_keyposes = 2;
  CHECK_THROWS_AS(train_go_diffuser(data, tiny_config(), tc, 1), DomainError);
  MotionSequence short_seq;
  short_seq.frames.assign(10, motion::make_frame(0, 0, 1, PoseVector::identity()));
  tc.max_keyposes = 4;
  CHECK_THROWS(train_go_diffuser({short_seq}, tiny_config(), tc, 1));
}
