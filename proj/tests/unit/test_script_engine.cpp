#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "promo/core/error.hpp"
#include "promo/core/rng.hpp"
#include "promo/script/script.hpp"

using namespace promo;
using namespace promo::script;
using motion::Mat3;
using motion::PoseVector;
using motion::rot_x;
using motion::rot_y;
using motion::rot_z;

namespace {

double deg(double d) { return d * M_PI / 180.0; }

PoseVector squat(double knee_interior_degrees) {
  PoseVector p = PoseVector::identity();
  const double knee = 180.0 - knee_interior_degrees;
  for (int hip : {motion::kLeftHip, motion::kRightHip}) p.set_rotation(hip, rot_x(deg(knee / 2 + 20)));
  for (int k : {motion::kLeftKnee, motion::kRightKnee}) p.set_rotation(k, rot_x(-deg(knee)));
  p.set_rotation(motion::kLeftShoulder, rot_y(-deg(90)));
  p.set_rotation(motion::kRightShoulder, rot_y(deg(90)));
  return p;
}

PoseVector random_pose(Rng& rng) {
  PoseVector p = PoseVector::identity();
  for (int j = 1; j < motion::kJointCount; ++j)
    p.set_rotation(j, rot_z(rng.uniform(-0.6, 0.6)) * rot_y(rng.uniform(-0.6, 0.6)) * rot_x(rng.uniform(-0.6, 0.6)));
  return p;
}

bool has(const PostureScript& s, Category c, BodyPart p, Qualifier q) {
  return std::any_of(s.clauses.begin(), s.clauses.end(),
                     [&](const Clause& k) { return k.category == c && k.subject[0] == p && k.qualifier == q; });
}

}  // namespace

TEST_CASE("T-pose description") {
  const PostureScript s = describe_pose(PoseVector::identity());
  CHECK(has(s, Category::bend, BodyPart::left_elbow, Qualifier::straight));
  CHECK(has(s, Category::bend, BodyPart::right_elbow, Qualifier::straight));
  CHECK(has(s, Category::orientation, BodyPart::left_arm, Qualifier::horizontal));
  CHECK(has(s, Category::orientation, BodyPart::right_arm, Qualifier::horizontal));
  CHECK(has(s, Category::ground_contact, BodyPart::left_foot, Qualifier::touching_ground));
  CHECK(has(s, Category::ground_contact, BodyPart::right_foot, Qualifier::touching_ground));
  CHECK(has(s, Category::orientation, BodyPart::torso, Qualifier::vertical));
}

TEST_CASE("deep squat bends both knees completely") {
  const PostureScript s = describe_pose(squat(45));
  CHECK(has(s, Category::bend, BodyPart::left_knee, Qualifier::completely_bent));
  CHECK(has(s, Category::bend, BodyPart::right_knee, Qualifier::completely_bent));
}

TEST_CASE("buckets are total and non-overlapping") {
  CHECK(bend_bucket(150.0) == Qualifier::slightly_bent);
  CHECK(bend_bucket(150.0001) == Qualifier::straight);
  CHECK(bend_bucket(60.0) == Qualifier::slightly_bent);
  CHECK(bend_bucket(59.999) == Qualifier::completely_bent);
  CHECK(distance_bucket(0.4999) == Qualifier::close);
  CHECK(distance_bucket(0.5) == Qualifier::shoulder_width_apart);
  CHECK(distance_bucket(1.5) == Qualifier::spread);
  CHECK(distance_bucket(2.5) == Qualifier::wide);
}

TEST_CASE("description is invariant to yaw and deterministic") {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    PoseVector p = random_pose(rng);
    const PostureScript a = describe_pose(p);
    CHECK(a == describe_pose(p));
    p.set_rotation(0, rot_z(rng.uniform(-M_PI, M_PI)) * p.rotation(0));
    CHECK(describe_pose(p) == a);
  }
}

TEST_CASE("mirroring swaps sides and keeps qualifiers") {
  const PostureScript s = describe_pose(squat(45));
  CHECK(describe_pose(motion::mirror_pose(squat(45))) == mirror_script(s));
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const PoseVector p = random_pose(rng);
    const PostureScript a = describe_pose(p);
    const PostureScript m = describe_pose(motion::mirror_pose(p));
    CHECK(m == mirror_script(a));
    for (const Clause& c : a.clauses) {
      if (c.category == Category::relative_position) continue;
      std::vector<BodyPart> subj;
      for (BodyPart b : c.subject) subj.push_back(mirror(b));
      std::sort(subj.begin(), subj.end());
      const bool found = std::any_of(m.clauses.begin(), m.clauses.end(), [&](const Clause& k) {
        auto ks = k.subject;
        std::sort(ks.begin(), ks.end());
        return k.category == c.category && ks == subj && k.qualifier == c.qualifier;
      });
      CHECK(found);
    }
  }
}

TEST_CASE("rendering") {
  const PostureScript one{{{Category::ground_contact, {BodyPart::left_foot}, Qualifier::off_ground}}};
  CHECK(render_script(one) == "His left foot is slightly above the ground.");
  const PostureScript two{{{Category::bend, {BodyPart::right_knee}, Qualifier::completely_bent},
                           {Category::relative_position, {BodyPart::left_hand, BodyPart::head}, Qualifier::above}}};
  CHECK(render_script(two) == "His right knee is completely bent. His left hand is above his head.");
  CHECK(parse_script(render_script(two)).script == two);
}

TEST_CASE("parsing") {
  Rng rng(3);
  for (int i = 0; i < 30; ++i) {
    const PostureScript s = describe_pose(random_pose(rng));
    const ParseResult r = parse_script(render_script(s));
    CHECK(r.script == s);
    CHECK(r.skipped == 0);
  }
  const ParseResult r = parse_script("  his LEFT   knee is straight.  The cat sat on the mat.");
  CHECK(r.script.clauses.size() == 1);
  CHECK(r.skipped == 1);
  const ParseResult rel = parse_script("His right hand is at the right of his head. Left foot is to the left of right foot");
  REQUIRE(rel.script.clauses.size() == 2);
  CHECK(rel.script.clauses[0].category == Category::relative_position);
  CHECK(rel.script.clauses[0].qualifier == Qualifier::right_of);
  CHECK(rel.script.clauses[1].qualifier == Qualifier::left_of);
  CHECK(parse_script("His left foot is off the ground.").script.clauses[0].qualifier == Qualifier::off_ground);
  CHECK_THROWS_AS(parse_script("nothing to see here."), DomainError);
  CHECK_THROWS_AS(parse_script("   "), DomainError);
  CHECK(parse_script("His torso is completely bent. His torso is vertical.").skipped == 1);
}

TEST_CASE("tokenization") {
  const auto& vocab = ScriptVocabulary::standard();
  for (std::size_t i = 0; i < vocab.size(); ++i) CHECK(vocab.id(vocab.token(static_cast<int>(i))) == static_cast<int>(i));
  CHECK(vocab.token(ScriptVocabulary::kPad) == "<pad>");
  const PostureScript a{{{Category::bend, {BodyPart::left_knee}, Qualifier::straight}}};
  PostureScript b = a;
  b.clauses[0].qualifier = Qualifier::slightly_bent;
  const auto ta = tokenize(a), tb = tokenize(b);
  CHECK(ta.size() == kDefaultTokenLength);
  CHECK(ta == tokenize(a));
  CHECK(ta != tb);
  CHECK(tokenize_unpadded(a).size() == 5);
  for (std::size_t i = 5; i < ta.size(); ++i) CHECK(ta[i] == ScriptVocabulary::kPad);
  CHECK_THROWS_AS(vocab.encode("his left knee is wobbly."), DomainError);
  CHECK(tokenize(a, 3).size() == 3);
}

TEST_CASE("script consistency") {
  const PoseVector p = squat(45);
  const PostureScript s = describe_pose(p);
  CHECK(script_consistency(p, s) == 1.0);
  PostureScript far;
  for (Clause c : s.clauses) {
    switch (c.qualifier) {
      case Qualifier::completely_bent: c.qualifier = Qualifier::straight; break;
      case Qualifier::straight: c.qualifier = Qualifier::completely_bent; break;
      case Qualifier::close: case Qualifier::shoulder_width_apart: c.qualifier = Qualifier::wide; break;
      case Qualifier::spread: case Qualifier::wide: c.qualifier = Qualifier::close; break;
      case Qualifier::vertical: c.qualifier = Qualifier::horizontal; break;
      case Qualifier::horizontal: c.qualifier = Qualifier::vertical; break;
      case Qualifier::touching_ground: c.qualifier = Qualifier::off_ground; break;
      case Qualifier::off_ground: c.qualifier = Qualifier::touching_ground; break;
      case Qualifier::above: c.qualifier = Qualifier::below; break;
      case Qualifier::below: c.qualifier = Qualifier::above; break;
      case Qualifier::in_front_of: c.qualifier = Qualifier::behind; break;
      case Qualifier::behind: c.qualifier = Qualifier::in_front_of; break;
      case Qualifier::right_of: c.qualifier = Qualifier::left_of; break;
      case Qualifier::left_of: c.qualifier = Qualifier::right_of; break;
      case Qualifier::slightly_bent: continue;
    }
    far.clauses.push_back(c);
  }
  CHECK(script_consistency(p, far) == 0.0);
  const PostureScript mixed{{{Category::bend, {BodyPart::left_knee}, Qualifier::completely_bent},
                             {Category::bend, {BodyPart::right_knee}, Qualifier::slightly_bent}}};
  CHECK(script_consistency(p, mixed) == 0.75);
}

TEST_CASE("JSON round trip and validation") {
  const PostureScript s = describe_pose(squat(80));
  const auto j = to_json(s);
  CHECK(j["text"] == render_script(s));
  CHECK(script_from_json(j) == s);
  CHECK_THROWS_AS(script_from_json(nlohmann::json::parse(
                      R"({"clauses":[{"category":"bend","subject":["torso"],"qualifier":"straight"}]})")),
                  DomainError);
  CHECK_THROWS_AS(script_from_json(nlohmann::json::parse(
                      R"({"clauses":[{"category":"bend","subject":["left knee"],"qualifier":"vertical"}]})")),
                  DomainError);
  CHECK_THROWS_AS(script_from_json(nlohmann::json::parse(R"({"clauses":[]})")), DomainError);
}
