#include "promo/script/script.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <regex>
#include <sstream>

#include "promo/core/error.hpp"

namespace promo::script {

using motion::Vec3;

namespace {

constexpr std::array<std::string_view, 5> kCategoryNames = {"bend", "distance", "relative_position", "orientation",
                                                             "ground_contact"};
constexpr std::array<std::string_view, 18> kPartNames = {
    "head",       "left shoulder", "right shoulder", "left elbow", "right elbow", "left hand",
    "right hand", "left hip",      "right hip",      "left knee",  "right knee",  "left foot",
    "right foot", "torso",         "left arm",       "right arm",  "left thigh",  "right thigh"};
constexpr std::array<std::string_view, 17> kQualifierNames = {
    "completely bent", "slightly bent", "straight",  "close", "shoulder width apart", "spread",
    "wide",            "behind",        "in front of", "below", "above",             "at the right of",
    "at the left of",  "vertical",      "horizontal", "touching ground", "off ground"};

bool is_segment(BodyPart p) { return p >= BodyPart::torso; }
bool bendable(BodyPart p) {
  return p == BodyPart::left_elbow || p == BodyPart::right_elbow || p == BodyPart::left_knee ||
         p == BodyPart::right_knee;
}

Category category_of(Qualifier q) {
  switch (q) {
    case Qualifier::completely_bent:
    case Qualifier::slightly_bent:
    case Qualifier::straight: return Category::bend;
    case Qualifier::close:
    case Qualifier::shoulder_width_apart:
    case Qualifier::spread:
    case Qualifier::wide: return Category::distance;
    case Qualifier::vertical:
    case Qualifier::horizontal: return Category::orientation;
    case Qualifier::touching_ground:
    case Qualifier::off_ground: return Category::ground_contact;
    default: return Category::relative_position;
  }
}

int point_joint(BodyPart p) {
  using namespace motion;
  switch (p) {
    case BodyPart::head: return kHead;
    case BodyPart::left_shoulder: return kLeftShoulder;
    case BodyPart::right_shoulder: return kRightShoulder;
    case BodyPart::left_elbow: return kLeftElbow;
    case BodyPart::right_elbow: return kRightElbow;
    case BodyPart::left_hand: return kLeftWrist;
    case BodyPart::right_hand: return kRightWrist;
    case BodyPart::left_hip: return kLeftHip;
    case BodyPart::right_hip: return kRightHip;
    case BodyPart::left_knee: return kLeftKnee;
    case BodyPart::right_knee: return kRightKnee;
    case BodyPart::left_foot: return kLeftFoot;
    case BodyPart::right_foot: return kRightFoot;
    default: throw DomainError("body part " + std::string(to_string(p)) + " is not a point");
  }
}

std::pair<int, int> segment_joints(BodyPart p) {
  using namespace motion;
  switch (p) {
    case BodyPart::torso: return {kPelvis, kNeck};
    case BodyPart::left_arm: return {kLeftShoulder, kLeftElbow};
    case BodyPart::right_arm: return {kRightShoulder, kRightElbow};
    case BodyPart::left_thigh: return {kLeftHip, kLeftKnee};
    case BodyPart::right_thigh: return {kRightHip, kRightKnee};
    default: throw DomainError("body part " + std::string(to_string(p)) + " is not a segment");
  }
}

/// Joint positions expressed in a yaw-free body frame.
struct Geometry {
  motion::JointPositions joints;
  Vec3 right, forward, up{0, 0, 1};
  double ground = 0;
  double shoulder_width = 0;

  Geometry(const motion::PoseVector& pose, const motion::Skeleton& sk) {
    using namespace motion;
    joints = forward_kinematics(pose, sk, Vec3::Zero());
    Vec3 r = joints[kRightHip] - joints[kLeftHip];
    r.z() = 0;
    if (r.norm() < 1e-6) {
      r = pose.rotation(kPelvis).col(0);
      r.z() = 0;
    }
    if (r.norm() < 1e-6) r = Vec3::UnitX();
    right = r.normalized();
    forward = up.cross(right);
    ground = joints[0].z();
    for (const Vec3& p : joints) ground = std::min(ground, p.z());
    shoulder_width = (sk.offsets[kLeftShoulder] + sk.offsets[kLeftCollar] - sk.offsets[kRightShoulder] -
                      sk.offsets[kRightCollar])
                         .norm();
  }

  Vec3 point(BodyPart p) const { return joints[point_joint(p)]; }
  double height(BodyPart p) const {
    if (p == BodyPart::left_foot) return std::min(joints[motion::kLeftAnkle].z(), joints[motion::kLeftFoot].z());
    if (p == BodyPart::right_foot) return std::min(joints[motion::kRightAnkle].z(), joints[motion::kRightFoot].z());
    return point(p).z();
  }
};

double interior_angle(const Vec3& a, const Vec3& joint, const Vec3& c) {
  const Vec3 u = a - joint, v = c - joint;
  return std::atan2(u.cross(v).norm(), u.dot(v)) * 180.0 / M_PI;
}

/// The pose's own qualifier for a clause's category and subject; nullopt when
/// the pose does not support any qualifier there (small relative offset, or an
/// oblique segment).
std::optional<Qualifier> evaluate(const Geometry& g, Category cat, const std::vector<BodyPart>& subject) {
  using namespace motion;
  switch (cat) {
    case Category::bend: {
      const BodyPart p = subject[0];
      int a, j, c;
      if (p == BodyPart::left_elbow) a = kLeftShoulder, j = kLeftElbow, c = kLeftWrist;
      else if (p == BodyPart::right_elbow) a = kRightShoulder, j = kRightElbow, c = kRightWrist;
      else if (p == BodyPart::left_knee) a = kLeftHip, j = kLeftKnee, c = kLeftAnkle;
      else a = kRightHip, j = kRightKnee, c = kRightAnkle;
      return bend_bucket(interior_angle(g.joints[a], g.joints[j], g.joints[c]));
    }
    case Category::distance:
      return distance_bucket((g.point(subject[0]) - g.point(subject[1])).norm() / g.shoulder_width);
    case Category::relative_position: {
      const Vec3 d = g.point(subject[0]) - g.point(subject[1]);
      const double comps[3] = {d.dot(g.right), d.dot(g.forward), d.dot(g.up)};
      int axis = 0;
      for (int i = 1; i < 3; ++i)
        if (std::abs(comps[i]) > std::abs(comps[axis])) axis = i;
      if (std::abs(comps[axis]) < kThresholds.relative_margin) return std::nullopt;
      const bool pos = comps[axis] > 0;
      if (axis == 0) return pos ? Qualifier::right_of : Qualifier::left_of;
      if (axis == 1) return pos ? Qualifier::in_front_of : Qualifier::behind;
      return pos ? Qualifier::above : Qualifier::below;
    }
    case Category::orientation: {
      const auto [a, b] = segment_joints(subject[0]);
      const Vec3 d = (g.joints[b] - g.joints[a]).normalized();
      const double elevation = std::asin(std::clamp(std::abs(d.dot(g.up)), 0.0, 1.0)) * 180.0 / M_PI;
      if (elevation >= 90.0 - kThresholds.orientation_cone) return Qualifier::vertical;
      if (elevation <= kThresholds.orientation_cone) return Qualifier::horizontal;
      return std::nullopt;
    }
    case Category::ground_contact:
      return g.height(subject[0]) - g.ground <= kThresholds.ground_margin ? Qualifier::touching_ground
                                                                           : Qualifier::off_ground;
  }
  return std::nullopt;
}

int bucket_rank(Qualifier q) {
  switch (q) {
    case Qualifier::completely_bent: return 0;
    case Qualifier::slightly_bent: return 1;
    case Qualifier::straight: return 2;
    case Qualifier::close: return 0;
    case Qualifier::shoulder_width_apart: return 1;
    case Qualifier::spread: return 2;
    case Qualifier::wide: return 3;
    default: return -100;
  }
}

Qualifier inverse_relation(Qualifier q) {
  switch (q) {
    case Qualifier::above: return Qualifier::below;
    case Qualifier::below: return Qualifier::above;
    case Qualifier::in_front_of: return Qualifier::behind;
    case Qualifier::behind: return Qualifier::in_front_of;
    case Qualifier::right_of: return Qualifier::left_of;
    case Qualifier::left_of: return Qualifier::right_of;
    default: return q;
  }
}

template <std::size_t N>
std::size_t find_name(const std::array<std::string_view, N>& names, std::string_view s, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return i;
  throw DomainError(std::string("unknown ") + what + ": " + std::string(s));
}

}  // namespace

std::string_view to_string(Category c) { return kCategoryNames.at(static_cast<std::size_t>(c)); }
std::string_view to_string(BodyPart p) { return kPartNames.at(static_cast<std::size_t>(p)); }
std::string_view to_string(Qualifier q) { return kQualifierNames.at(static_cast<std::size_t>(q)); }
Category category_from_string(std::string_view s) { return static_cast<Category>(find_name(kCategoryNames, s, "category")); }
BodyPart body_part_from_string(std::string_view s) { return static_cast<BodyPart>(find_name(kPartNames, s, "body part")); }
Qualifier qualifier_from_string(std::string_view s) { return static_cast<Qualifier>(find_name(kQualifierNames, s, "qualifier")); }

BodyPart mirror(BodyPart p) {
  const std::string_view name = to_string(p);
  if (name.starts_with("left ")) return body_part_from_string("right " + std::string(name.substr(5)));
  if (name.starts_with("right ")) return body_part_from_string("left " + std::string(name.substr(6)));
  return p;
}

void Clause::validate() const {
  if (category_of(qualifier) != category) {
    throw DomainError("qualifier '" + std::string(to_string(qualifier)) + "' does not belong to category " +
                      std::string(to_string(category)));
  }
  const std::size_t want = (category == Category::distance || category == Category::relative_position) ? 2 : 1;
  if (subject.size() != want) throw DomainError("clause of category " + std::string(to_string(category)) + " needs " + std::to_string(want) + " subject(s)");
  for (BodyPart p : subject)
    if (static_cast<std::size_t>(p) >= kPartNames.size()) throw DomainError("unknown body part");
  switch (category) {
    case Category::bend:
      if (!bendable(subject[0])) throw DomainError(std::string(to_string(subject[0])) + " cannot bend");
      break;
    case Category::orientation:
      if (!is_segment(subject[0])) throw DomainError(std::string(to_string(subject[0])) + " has no orientation");
      break;
    case Category::ground_contact:
      if (is_segment(subject[0])) throw DomainError(std::string(to_string(subject[0])) + " cannot touch the ground");
      break;
    default:
      if (is_segment(subject[0]) || is_segment(subject[1]) || subject[0] == subject[1])
        throw DomainError("pair clauses need two distinct point-like body parts");
  }
}

void PostureScript::validate() const {
  if (clauses.empty()) throw DomainError("posture script has no clauses");
  for (const Clause& c : clauses) c.validate();
}

std::string PostureScript::text() const { return render_script(*this); }

Qualifier bend_bucket(double angle) {
  if (angle > kThresholds.straight_above) return Qualifier::straight;
  if (angle < kThresholds.completely_bent_below) return Qualifier::completely_bent;
  return Qualifier::slightly_bent;
}

Qualifier distance_bucket(double ratio) {
  if (ratio < kThresholds.close_below) return Qualifier::close;
  if (ratio < kThresholds.shoulder_width_below) return Qualifier::shoulder_width_apart;
  if (ratio < kThresholds.spread_below) return Qualifier::spread;
  return Qualifier::wide;
}

PostureScript describe_pose(const motion::PoseVector& pose, const motion::Skeleton& skeleton) {
  using B = BodyPart;
  const Geometry g(pose, skeleton);
  PostureScript s;
  auto emit = [&](Category c, std::vector<BodyPart> subject) {
    if (auto q = evaluate(g, c, subject)) s.clauses.push_back({c, std::move(subject), *q});
  };
  for (B p : {B::left_elbow, B::right_elbow, B::left_knee, B::right_knee}) emit(Category::bend, {p});
  emit(Category::distance, {B::left_hand, B::right_hand});
  emit(Category::distance, {B::left_knee, B::right_knee});
  emit(Category::distance, {B::left_foot, B::right_foot});
  emit(Category::relative_position, {B::left_hand, B::left_shoulder});
  emit(Category::relative_position, {B::right_hand, B::right_shoulder});
  emit(Category::relative_position, {B::left_knee, B::left_hip});
  emit(Category::relative_position, {B::right_knee, B::right_hip});
  emit(Category::relative_position, {B::left_foot, B::right_foot});
  for (B p : {B::torso, B::left_arm, B::right_arm, B::left_thigh, B::right_thigh}) emit(Category::orientation, {p});
  for (B p : {B::left_hand, B::right_hand, B::left_knee, B::right_knee}) {
    if (evaluate(g, Category::ground_contact, {p}) == Qualifier::touching_ground)
      s.clauses.push_back({Category::ground_contact, {p}, Qualifier::touching_ground});
  }
  emit(Category::ground_contact, {B::left_foot});
  emit(Category::ground_contact, {B::right_foot});
  return s;
}

PostureScript mirror_script(const PostureScript& s) {
  PostureScript out;
  for (Clause c : s.clauses) {
    for (BodyPart& p : c.subject) p = mirror(p);
    if (c.category == Category::relative_position) {
      if (c.qualifier == Qualifier::right_of) c.qualifier = Qualifier::left_of;
      else if (c.qualifier == Qualifier::left_of) c.qualifier = Qualifier::right_of;
    }
    if (c.subject.size() == 2 && c.subject[0] == mirror(c.subject[1]) && c.subject[0] > c.subject[1]) {
      std::swap(c.subject[0], c.subject[1]);
      if (c.category == Category::relative_position) c.qualifier = inverse_relation(c.qualifier);
    }
    out.clauses.push_back(std::move(c));
  }
  std::stable_sort(out.clauses.begin(), out.clauses.end(), [](const Clause& a, const Clause& b) {
    if (a.category != b.category) return a.category < b.category;
    return a.subject[0] < b.subject[0];
  });
  return out;
}

// ---- rendering ------------------------------------------------------------

namespace {

std::string render_qualifier(Qualifier q) {
  switch (q) {
    case Qualifier::shoulder_width_apart: return "shoulder width apart";
    case Qualifier::spread: return "spread apart";
    case Qualifier::wide: return "wide apart";
    case Qualifier::touching_ground: return "touching the ground";
    case Qualifier::off_ground: return "slightly above the ground";
    default: return std::string(to_string(q));
  }
}

std::string render_clause(const Clause& c) {
  const std::string a(to_string(c.subject[0]));
  switch (c.category) {
    case Category::distance:
      return "His " + a + " and " + std::string(to_string(c.subject[1])) + " are " + render_qualifier(c.qualifier) + ".";
    case Category::relative_position:
      return "His " + a + " is " + render_qualifier(c.qualifier) + " his " + std::string(to_string(c.subject[1])) + ".";
    default:
      return "His " + a + " is " + render_qualifier(c.qualifier) + ".";
  }
}

std::string normalize(std::string_view text) {
  std::string out;
  bool space = false;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  }
  return out;
}

const std::string kPart =
    "((?:left|right) (?:shoulder|elbow|hand|hip|knee|foot|arm|thigh)|head|torso)";
const std::string kPoss = "(?:(?:his|her|their|the) )?";

struct Pattern {
  std::regex re;
  Category category;
};

std::optional<Qualifier> single_qualifier(const std::string& q) {
  static const std::map<std::string, Qualifier> table = {
      {"completely bent", Qualifier::completely_bent}, {"fully bent", Qualifier::completely_bent},
      {"slightly bent", Qualifier::slightly_bent},     {"partially bent", Qualifier::slightly_bent},
      {"bent", Qualifier::slightly_bent},              {"straight", Qualifier::straight},
      {"extended", Qualifier::straight},               {"vertical", Qualifier::vertical},
      {"upright", Qualifier::vertical},                {"horizontal", Qualifier::horizontal},
      {"touching the ground", Qualifier::touching_ground}, {"touching ground", Qualifier::touching_ground},
      {"on the ground", Qualifier::touching_ground},   {"slightly above the ground", Qualifier::off_ground},
      {"above the ground", Qualifier::off_ground},     {"off the ground", Qualifier::off_ground},
      {"off ground", Qualifier::off_ground},           {"not touching the ground", Qualifier::off_ground},
      {"lifted", Qualifier::off_ground},               {"raised off the ground", Qualifier::off_ground}};
  auto it = table.find(q);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

std::optional<Qualifier> distance_qualifier(const std::string& q) {
  static const std::map<std::string, Qualifier> table = {
      {"close", Qualifier::close},
      {"close together", Qualifier::close},
      {"close to each other", Qualifier::close},
      {"shoulder width apart", Qualifier::shoulder_width_apart},
      {"shoulder-width apart", Qualifier::shoulder_width_apart},
      {"spread", Qualifier::spread},
      {"spread apart", Qualifier::spread},
      {"wide", Qualifier::wide},
      {"wide apart", Qualifier::wide},
      {"far apart", Qualifier::wide}};
  auto it = table.find(q);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

std::optional<Qualifier> relation_qualifier(const std::string& q) {
  static const std::map<std::string, Qualifier> table = {
      {"behind", Qualifier::behind},          {"in front of", Qualifier::in_front_of},
      {"below", Qualifier::below},            {"under", Qualifier::below},
      {"beneath", Qualifier::below},          {"above", Qualifier::above},
      {"over", Qualifier::above},             {"at the right of", Qualifier::right_of},
      {"to the right of", Qualifier::right_of}, {"on the right of", Qualifier::right_of},
      {"right of", Qualifier::right_of},      {"at the left of", Qualifier::left_of},
      {"to the left of", Qualifier::left_of}, {"on the left of", Qualifier::left_of},
      {"left of", Qualifier::left_of}};
  auto it = table.find(q);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

std::optional<Clause> parse_sentence(const std::string& sentence) {
  static const std::regex pair_re("^" + kPoss + kPart + " and " + kPoss + kPart + " are (.+)$");
  static const std::regex rel_re("^" + kPoss + kPart +
                                 " is (?:positioned |located )?(behind|in front of|below|under|beneath|above|over|"
                                 "(?:at |to |on )?the (?:right|left) of|(?:right|left) of) " +
                                 kPoss + kPart + "$");
  static const std::regex single_re("^" + kPoss + kPart + " is (.+)$");
  std::smatch m;
  std::optional<Clause> c;
  if (std::regex_match(sentence, m, pair_re)) {
    if (auto q = distance_qualifier(m[3]))
      c = Clause{Category::distance, {body_part_from_string(m[1].str()), body_part_from_string(m[2].str())}, *q};
  } else if (std::regex_match(sentence, m, rel_re)) {
    std::string rel = m[2];
    if (rel.starts_with("the ")) rel = "at " + rel;
    if (auto q = relation_qualifier(rel))
      c = Clause{Category::relative_position, {body_part_from_string(m[1].str()), body_part_from_string(m[3].str())}, *q};
  } else if (std::regex_match(sentence, m, single_re)) {
    if (auto q = single_qualifier(m[2])) c = Clause{category_of(*q), {body_part_from_string(m[1].str())}, *q};
  }
  if (!c) return std::nullopt;
  try {
    c->validate();
  } catch (const DomainError&) {
    return std::nullopt;
  }
  return c;
}

}  // namespace

std::string render_script(const PostureScript& s) {
  std::string out;
  for (const Clause& c : s.clauses) {
    if (!out.empty()) out += ' ';
    out += render_clause(c);
  }
  return out;
}

ParseResult parse_script(std::string_view text) {
  const std::string norm = normalize(text);
  if (norm.empty()) throw DomainError("cannot parse an empty posture script");
  ParseResult r;
  std::size_t start = 0;
  while (start < norm.size()) {
    std::size_t end = norm.find_first_of(".;\n", start);
    if (end == std::string::npos) end = norm.size();
    std::string sentence = norm.substr(start, end - start);
    start = end + 1;
    while (!sentence.empty() && sentence.front() == ' ') sentence.erase(sentence.begin());
    while (!sentence.empty() && sentence.back() == ' ') sentence.pop_back();
    if (sentence.empty()) continue;
    if (auto c = parse_sentence(sentence)) r.script.clauses.push_back(std::move(*c));
    else ++r.skipped;
  }
  if (r.script.clauses.empty()) throw DomainError("no recognizable posture clause in text");
  return r;
}

// ---- vocabulary -----------------------------------------------------------

ScriptVocabulary::ScriptVocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!index_.emplace(tokens_[i], static_cast<int>(i)).second) throw DomainError("duplicate token " + tokens_[i]);
    max_words_ = std::max<std::size_t>(max_words_, std::count(tokens_[i].begin(), tokens_[i].end(), ' ') + 1);
  }
}

const ScriptVocabulary& ScriptVocabulary::standard() {
  static const ScriptVocabulary v = [] {
    std::vector<std::string> t = {"<pad>", "his", "is", "are", "and", "."};
    for (auto p : kPartNames) t.emplace_back(p);
    for (std::size_t q = 0; q < kQualifierNames.size(); ++q) t.push_back(render_qualifier(static_cast<Qualifier>(q)));
    return ScriptVocabulary(std::move(t));
  }();
  return v;
}

int ScriptVocabulary::id(std::string_view token) const {
  auto it = index_.find(token);
  if (it == index_.end()) throw DomainError("token not in vocabulary: " + std::string(token));
  return it->second;
}

std::vector<int> ScriptVocabulary::encode(std::string_view text) const {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) words.push_back(std::move(cur));
    cur.clear();
  };
  for (char ch : normalize(text)) {
    if (ch == ' ') flush();
    else if (ch == '.') {
      flush();
      words.emplace_back(".");
    } else cur += ch;
  }
  flush();
  std::vector<int> ids;
  std::size_t i = 0;
  while (i < words.size()) {
    bool matched = false;
    for (std::size_t n = std::min(max_words_, words.size() - i); n >= 1; --n) {
      std::string phrase = words[i];
      for (std::size_t k = 1; k < n; ++k) phrase += ' ' + words[i + k];
      auto it = index_.find(phrase);
      if (it != index_.end() && it->second != kPad) {
        ids.push_back(it->second);
        i += n;
        matched = true;
        break;
      }
    }
    if (!matched) throw DomainError("word not in vocabulary: " + words[i]);
  }
  return ids;
}

std::vector<int> tokenize_unpadded(const PostureScript& s) { return ScriptVocabulary::standard().encode(render_script(s)); }

std::vector<int> tokenize(const PostureScript& s, std::size_t length) {
  std::vector<int> ids = tokenize_unpadded(s);
  ids.resize(length, ScriptVocabulary::kPad);
  return ids;
}

// ---- consistency ----------------------------------------------------------

double script_consistency(const motion::PoseVector& pose, const PostureScript& s, const motion::Skeleton& skeleton) {
  if (s.clauses.empty()) return 0.0;
  const Geometry g(pose, skeleton);
  double total = 0.0;
  for (const Clause& c : s.clauses) {
    const std::optional<Qualifier> actual = evaluate(g, c.category, c.subject);
    if (!actual) continue;
    if (*actual == c.qualifier) total += 1.0;
    else if ((c.category == Category::bend || c.category == Category::distance) &&
             std::abs(bucket_rank(*actual) - bucket_rank(c.qualifier)) == 1)
      total += 0.5;
  }
  return total / static_cast<double>(s.clauses.size());
}

// ---- json -----------------------------------------------------------------

nlohmann::json to_json(const PostureScript& s) {
  nlohmann::json clauses = nlohmann::json::array();
  for (const Clause& c : s.clauses) {
    nlohmann::json subject = nlohmann::json::array();
    for (BodyPart p : c.subject) subject.push_back(std::string(to_string(p)));
    clauses.push_back({{"category", std::string(to_string(c.category))},
                       {"subject", subject},
                       {"qualifier", std::string(to_string(c.qualifier))}});
  }
  return {{"clauses", clauses}, {"text", render_script(s)}};
}

PostureScript script_from_json(const nlohmann::json& j) {
  PostureScript s;
  if (!j.is_object() || !j.contains("clauses") || !j["clauses"].is_array()) throw DomainError("script JSON needs a clauses array");
  for (const auto& c : j["clauses"]) {
    Clause clause{category_from_string(c.at("category").get<std::string>()), {},
                  qualifier_from_string(c.at("qualifier").get<std::string>())};
    for (const auto& p : c.at("subject")) clause.subject.push_back(body_part_from_string(p.get<std::string>()));
    s.clauses.push_back(std::move(clause));
  }
  s.validate();
  return s;
}

}  // namespace promo::script
