#include "doctest.h"

#include <cmath>

#include "promo/eval/metrics.hpp"
#include "promo/pipeline/synth.hpp"

using namespace promo;
using namespace promo::eval;
using nn::Tensor;
using motion::Vec3;

namespace {

Tensor<float> sphere(std::size_t n, std::size_t d, Rng& rng) {
  Tensor<float> t = Tensor<float>::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (auto& v : t.row(i)) {
      v = static_cast<float>(rng.normal());
      s += double(v) * v;
    }
    for (auto& v : t.row(i)) v = static_cast<float>(v / std::sqrt(s));
  }
  return t;
}

GaussianStats gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov) { return {std::move(mean), std::move(cov)}; }

JointTrajectory constant_trajectory(std::size_t frames, const Vec3& root) {
  motion::JointPositions p;
  for (int j = 0; j < motion::kJointCount; ++j) p[j] = root + Vec3(0.1 * j, 0.05 * j, 0.02 * j);
  return JointTrajectory{std::vector<motion::JointPositions>(frames, p)};
}

JointTrajectory shifted(JointTrajectory t, const Vec3& d) {
  for (auto& f : t.frames)
    for (auto& p : f) p += d;
  return t;
}

JointTrajectory random_trajectory(std::size_t frames, Rng& rng) {
  JointTrajectory t;
  for (std::size_t f = 0; f < frames; ++f) {
    motion::JointPositions p;
    for (auto& q : p) q = Vec3(rng.normal(), rng.normal(), rng.normal());
    t.frames.push_back(p);
  }
  return t;
}

}  // namespace

TEST_CASE("r-precision with oracle features is perfect") {
  Rng rng(1);
  const auto f = sphere(40, 8, rng);
  const auto r = r_precision(f, f, {1, 5, 10});
  for (double v : r.recall) CHECK(v == 1.0);
  CHECK(r.median_rank == 1.0);
  const auto one = r_precision(sphere(1, 4, rng), sphere(1, 4, rng), {1});
  CHECK(one.recall[0] == 1.0);
  CHECK(one.median_rank == 1.0);
}

TEST_CASE("r-precision of independent features matches the uniform rank expectation") {
  double mean = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(100 + seed);
    const auto m = sphere(320, 16, rng);
    const auto t = sphere(320, 16, rng);
    const auto r = r_precision(m, t, {1, 3, 10, 320});
    CHECK(r.recall[3] == 1.0);
    // R@K is non-decreasing in K and MedR lies in [1, N].
    CHECK(r.recall[0] <= r.recall[1]);
    CHECK(r.recall[1] <= r.recall[2]);
    CHECK(r.median_rank >= 1.0);
    CHECK(r.median_rank <= 320.0);
    mean += r.recall[2] / 20.0;
  }
  // A single seed has standard deviation sqrt(p (1 - p) / N) ~ 0.0097, so the
  // bound applies to the 20-seed mean.
  CHECK(std::abs(mean - 10.0 / 320.0) < 0.005);
}

TEST_CASE("r-precision hand case and errors") {
  // True-text ranks are 3, 2 and 2.
  Tensor<float> m({3, 1}, std::vector<float>{0.f, 10.f, 20.f});
  Tensor<float> t({3, 1}, std::vector<float>{19.f, 1.5f, 11.5f});
  const auto r = r_precision(m, t, {1, 2, 3});
  CHECK(r.recall == std::vector<double>{0.0, 2.0 / 3.0, 1.0});
  CHECK(r.median_rank == 2.0);
  CHECK_THROWS_AS(r_precision(m, Tensor<float>::matrix(2, 1), {1}), ShapeError);
  CHECK_THROWS_AS(r_precision(m, t, {4}), DomainError);
  CHECK_THROWS_AS(r_precision(m, t, {}), DomainError);
}

TEST_CASE("fid closed forms") {
  Rng rng(3);
  Tensor<float> x = Tensor<float>::matrix(200, 5);
  for (auto& v : x.values()) v = static_cast<float>(rng.normal());
  const auto g = GaussianStats::fit(x);
  CHECK(fid(g, g) < 1e-6);

  const Eigen::VectorXd mu = (Eigen::VectorXd(4) << 1.0, -2.0, 0.5, 3.0).finished();
  CHECK(fid(gaussian(Eigen::VectorXd::Zero(4), Eigen::MatrixXd::Identity(4, 4)),
            gaussian(mu, Eigen::MatrixXd::Identity(4, 4))) == doctest::Approx(mu.squaredNorm()).epsilon(1e-9));

  const auto a = gaussian(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 1.0));
  const auto b = gaussian(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Constant(1, 1, 4.0));
  CHECK(std::abs(fid(a, b) - 1.0) < 1e-6);
}

TEST_CASE("fid is symmetric and nonnegative") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Tensor<float> x = Tensor<float>::matrix(50, 6), y = Tensor<float>::matrix(40, 6);
    for (auto& v : x.values()) v = static_cast<float>(rng.normal());
    for (auto& v : y.values()) v = static_cast<float>(rng.normal(0.3, 2.0));
    const auto a = GaussianStats::fit(x), b = GaussianStats::fit(y);
    CHECK(fid(a, b) >= 0.0);
    CHECK(std::abs(fid(a, b) - fid(b, a)) < 1e-6);
  }
  // A rank-deficient covariance is still accepted.
  Tensor<float> low = Tensor<float>::matrix(3, 6);
  for (std::size_t i = 0; i < 3; ++i) low.at(i, i) = 1.0f;
  CHECK(fid(GaussianStats::fit(low), GaussianStats::fit(low)) < 1e-6);
}

TEST_CASE("fid input validation") {
  const auto a = gaussian(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2));
  CHECK_THROWS_AS(fid(a, gaussian(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3))), DomainError);
  Eigen::MatrixXd asym = Eigen::MatrixXd::Identity(2, 2);
  asym(0, 1) = 0.5;
  CHECK_THROWS_AS(fid(a, gaussian(Eigen::VectorXd::Zero(2), asym)), DomainError);
  Eigen::MatrixXd neg = Eigen::MatrixXd::Identity(2, 2);
  neg(1, 1) = -1.0;
  CHECK_THROWS_AS(fid(a, gaussian(Eigen::VectorXd::Zero(2), neg)), DomainError);
  CHECK_THROWS_AS(GaussianStats::fit(Tensor<float>::matrix(1, 2)), DomainError);
}

TEST_CASE("multimodal distance") {
  Rng rng(4);
  const auto f = sphere(10, 3, rng);
  CHECK(multimodal_distance(f, f) == 0.0);
  Tensor<float> neg = f;
  for (auto& v : neg.values()) v = -v;
  CHECK(multimodal_distance(f, neg) == doctest::Approx(2.0).epsilon(1e-6));
  Tensor<float> m({2, 2}, std::vector<float>{0, 0, 1, 1}), t({2, 2}, std::vector<float>{3, 4, 1, 1});
  CHECK(multimodal_distance(m, t) == doctest::Approx(2.5));
  CHECK_THROWS_AS(multimodal_distance(m, Tensor<float>::matrix(3, 2)), ShapeError);
}

TEST_CASE("smoothness of constant, linear and hand-set trajectories") {
  CHECK(smoothness(constant_trajectory(5, Vec3(1, 2, 3))) == 0.0);
  JointTrajectory lin;
  for (int f = 0; f < 6; ++f) lin.frames.push_back(shifted(constant_trajectory(1, Vec3::Zero()), Vec3(0.5 * f, -f, 0)).frames[0]);
  CHECK(smoothness(lin) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  // Every joint moves 0, 0, 1 along x: one second difference of 1 per joint.
  JointTrajectory hand;
  for (double x : {0.0, 0.0, 1.0}) hand.frames.push_back(shifted(constant_trajectory(1, Vec3::Zero()), Vec3(x, 0, 0)).frames[0]);
  CHECK(smoothness(hand) == doctest::Approx(1.0));
  CHECK_THROWS_AS(smoothness(constant_trajectory(2, Vec3::Zero())), DomainError);
}

TEST_CASE("ape hand cases") {
  const auto ref = constant_trajectory(2, Vec3::Zero());
  auto gen = ref;
  for (auto v : kAllPositionVariants) CHECK(ape(gen, ref, v) == 0.0);
  // Root errors of 3 and 4 in the two frames.
  gen.frames[0][0] += Vec3(3, 0, 0);
  gen.frames[1][0] += Vec3(0, 0, 4);
  CHECK(ape(gen, ref, PositionVariant::root_joint) == doctest::Approx(3.5));
  CHECK(ape(gen, ref, PositionVariant::global_traj) == doctest::Approx(1.5));

  const Vec3 d(1, 2, 2);
  const auto moved = shifted(ref, d);
  CHECK(ape(moved, ref, PositionVariant::root_joint) == doctest::Approx(3.0));
  CHECK(ape(moved, ref, PositionVariant::mean_global) == doctest::Approx(3.0));
  CHECK(ape(moved, ref, PositionVariant::global_traj) == doctest::Approx(std::sqrt(5.0)));
  CHECK(ape(moved, ref, PositionVariant::mean_local) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("ave hand cases") {
  auto ref = constant_trajectory(2, Vec3::Zero());
  auto gen = ref;
  ref.frames[1][0].x() += 2.0;  // root x: 0, 2 -> variance 2
  gen.frames[1][0].x() += 4.0;  // root x: 0, 4 -> variance 8
  CHECK(ave(gen, ref, PositionVariant::root_joint) == doctest::Approx(6.0));
  CHECK(ave(gen, ref, PositionVariant::global_traj) == doctest::Approx(6.0));
  for (auto v : kAllPositionVariants) {
    CHECK(ave(ref, ref, v) == 0.0);
    CHECK(ave(shifted(ref, Vec3(5, -1, 2)), ref, v) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(ave(constant_trajectory(1, Vec3::Zero()), constant_trajectory(1, Vec3::Zero()),
                      PositionVariant::root_joint),
                  DomainError);
}

TEST_CASE("ape properties on random trajectories") {
  Rng rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const auto a = random_trajectory(10, rng), b = random_trajectory(10, rng), c = random_trajectory(10, rng);
    const Vec3 d(rng.normal(), rng.normal(), rng.normal());
    for (auto v : kAllPositionVariants) {
      CHECK(ape(a, c, v) <= ape(a, b, v) + ape(b, c, v) + 1e-12);
      CHECK(ape(a, b, v) == doctest::Approx(ape(b, a, v)));
      CHECK(ape(a, b, v) > 0.0);
    }
    CHECK(ape(shifted(a, d), b, PositionVariant::mean_local) == doctest::Approx(ape(a, b, PositionVariant::mean_local)));
    CHECK(ave(shifted(a, d), b, PositionVariant::mean_global) ==
          doctest::Approx(ave(a, b, PositionVariant::mean_global)));
  }
}

TEST_CASE("batched ape averages samples") {
  const auto ref = constant_trajectory(3, Vec3::Zero());
  const auto g1 = shifted(ref, Vec3(1, 0, 0)), g2 = shifted(ref, Vec3(0, 3, 0));
  CHECK(ape({g1, g2}, {ref, ref}, PositionVariant::mean_global) == doctest::Approx(2.0));
  CHECK_THROWS_AS(ape({g1}, {ref, ref}, PositionVariant::root_joint), ShapeError);
  CHECK_THROWS_AS(ape(constant_trajectory(2, Vec3::Zero()), ref, PositionVariant::root_joint), ShapeError);
  JointTrajectory bad = ref;
  bad.frames[1][4].x() = std::nan("");
  CHECK_THROWS_AS(ape(bad, ref, PositionVariant::root_joint), DomainError);
}

TEST_CASE("trajectories from motions follow forward kinematics") {
  const auto m = pipeline::synth_motion_dataset(1, 12).front();
  const auto t = JointTrajectory::from_motion(m.sequence, m.raw.root_position[0].head<2>());
  REQUIRE(t.frames.size() == 64);
  double err = 0.0;
  for (std::size_t f = 0; f < 64; ++f) err = std::max(err, (t.frames[f][0] - m.raw.root_position[f]).norm());
  CHECK(err < 1e-4);
  CHECK(smoothness(t) >= 0.0);
}

TEST_CASE("variant names round-trip and reports serialize") {
  for (auto v : kAllPositionVariants) CHECK(position_variant_from_string(to_string(v)) == v);
  CHECK_THROWS_AS(position_variant_from_string("nope"), DomainError);
  const MetricRecord r{"ape", "root_joint", 0.25, 16};
  const auto back = MetricRecord::from_json(r.to_json());
  CHECK(back.metric == r.metric);
  CHECK(back.variant == r.variant);
  CHECK(back.value == r.value);
  CHECK(back.n == r.n);
  const auto rep = report_json({r, r});
  CHECK(rep.at("records").size() == 2);
  CHECK(rep.at("ave_averaging") == "samples_then_joints");
}

namespace {

FeatureExtractorConfig tiny_extractors() {
  FeatureExtractorConfig c;
  c.token_embedding = 16;
  c.gru_hidden = 16;
  c.motion_hidden = 16;
  c.feature_dim = 16;
  return c;
}

}  // namespace

TEST_CASE("text tokens concatenate the plan's scripts and truncate") {
  const auto pairs = pipeline::synth_motion_text_dataset(1, 4);
  const auto& text = pairs.front().text;
  std::vector<int> expected;
  for (const auto& s : text) {
    const auto t = posture::condition_tokens(s, 1000);
    expected.insert(expected.end(), t.begin(), t.end());
  }
  CHECK(text_tokens(text, 10000) == expected);
  const auto cut = text_tokens(text, 7);
  CHECK(cut == std::vector<int>(expected.begin(), expected.begin() + 7));
}

TEST_CASE("feature extractors emit unit-norm features and train deterministically") {
  const auto data = pipeline::synth_motion_text_dataset(32, 5, 3);
  FeatureTrainConfig tc;
  tc.epochs = 2;
  tc.batch = 16;
  const auto a = train_feature_extractors(data, tiny_extractors(), tc, 3);
  const auto b = train_feature_extractors(data, tiny_extractors(), tc, 3);
  CHECK(a.loss_history == b.loss_history);
  CHECK(a.loss_history.size() == 2);

  std::vector<motion::MotionSequence> motions;
  std::vector<MotionText> texts;
  for (const auto& p : data) {
    motions.push_back(p.motion);
    texts.push_back(p.text);
  }
  const auto fm = a.model->encode_motions(motions);
  const auto ft = a.model->encode_texts(texts);
  CHECK(fm.shape() == nn::Shape{32, 16});
  CHECK(ft.shape() == nn::Shape{32, 16});
  for (const auto* t : {&fm, &ft})
    for (std::size_t r = 0; r < 32; ++r) {
      double s = 0.0;
      for (float v : t->row(r)) s += double(v) * v;
      CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-5));
    }
  const auto fm_b = b.model->encode_motions(motions);
  CHECK(std::equal(fm.values().begin(), fm.values().end(), fm_b.values().begin()));

  const double top1 = feature_top1(*a.model, data, 16);
  CHECK((top1 >= 0.0 && top1 <= 1.0));

  FeatureTrainConfig big = tc;
  big.batch = 64;
  CHECK_THROWS_AS(train_feature_extractors(data, tiny_extractors(), big, 3), DomainError);
  auto odd = tiny_extractors();
  odd.motion_hidden = 15;
  CHECK_THROWS_AS(odd.validate(), DomainError);
}

TEST_CASE("similarity filter examples") {
  const auto data = pipeline::synth_motion_text_dataset(6, 6, 3);
  std::vector<MotionText> texts;
  for (const auto& p : data) texts.push_back(p.text);
  const FeatureExtractorPair model(tiny_extractors(), go::FeatureStats::identity(), 1);

  CHECK(similarity_filter(texts, {}, model).size() == texts.size());
  CHECK(similarity_filter({}, texts, model).empty());

  const std::vector<MotionText> b = {texts[2]};
  const auto kept = similarity_filter(texts, b, model);
  CHECK(std::find(kept.begin(), kept.end(), 2u) == kept.end());

  CHECK(similarity_filter(texts, texts, model, 1.0).size() == texts.size());

  Tensor<float> x({3, 2}), y({1, 2});
  x.row(0)[0] = 1.0f;  // cos 1 with y
  x.row(1)[0] = 0.4f;  // cos 0.4
  x.row(1)[1] = 0.9165f;
  x.row(2)[0] = -1.0f;  // cos -1
  y.row(0)[0] = 2.0f;
  CHECK(similarity_filter(x, y, 0.45) == std::vector<std::size_t>{1, 2});
  CHECK(similarity_filter(x, y, 0.3) == std::vector<std::size_t>{2});
  CHECK_THROWS_AS(similarity_filter(x, Tensor<float>({1, 3})), ShapeError);
}
