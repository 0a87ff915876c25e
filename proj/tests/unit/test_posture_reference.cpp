#include "doctest.h"

#include "promo/pipeline/synth.hpp"
#include "promo/posture/planning.hpp"

using namespace promo;
using namespace promo::posture;
using namespace promo::script;

// Seeded reference runs on 2k synthetic pairs; thresholds are the ones the
// module promises, measured values are recorded in the test log.

TEST_CASE("trained encoders retrieve held-out pairs well above chance") {
  const auto train = pipeline::synth_pose_dataset(2000, 7);
  const auto held = pipeline::synth_pose_dataset(256, 8);
  RetrievalTrainConfig tc;
  tc.epochs = 10;
  const auto r = train_retrieval_encoders(train, RetrievalConfig{}, tc, 3);
  const double top1 = retrieval_top1(*r.model, held, tc.batch);
  MESSAGE("held-out top-1 = " << top1 << ", chance = " << 1.0 / tc.batch);
  CHECK(top1 > 10.0 / static_cast<double>(tc.batch));
  CHECK(r.loss_history.back() < r.loss_history.front());
}

TEST_CASE("trained denoiser honours a two-clause knee script") {
  const auto train = pipeline::synth_pose_dataset(2000, 7);
  PostureTrainConfig tc;
  tc.epochs = 20;
  const auto m = train_posture_diffuser(train, PostureDenoiserConfig{}, tc, 11);
  const PostureScript s{{Clause{Category::bend, {BodyPart::left_knee}, Qualifier::completely_bent},
                         Clause{Category::bend, {BodyPart::right_knee}, Qualifier::completely_bent}}};
  const auto c = generate_candidates(*m.model, {s}, 16, 2.0, 5);
  int good = 0;
  for (const auto& p : c.poses[0]) good += script_consistency(p, s) >= 0.5;
  MESSAGE(good << " of 16 candidates re-caption with consistency >= 0.5");
  CHECK(good >= 10);  // 60% of 16, rounded up
}
