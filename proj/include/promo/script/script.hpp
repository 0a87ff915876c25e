#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "promo/motion/motion.hpp"

namespace promo::script {

enum class Category { bend, distance, relative_position, orientation, ground_contact };

enum class BodyPart {
  head,
  left_shoulder,
  right_shoulder,
  left_elbow,
  right_elbow,
  left_hand,
  right_hand,
  left_hip,
  right_hip,
  left_knee,
  right_knee,
  left_foot,
  right_foot,
  torso,
  left_arm,
  right_arm,
  left_thigh,
  right_thigh,
};

enum class Qualifier {
  completely_bent,
  slightly_bent,
  straight,
  close,
  shoulder_width_apart,
  spread,
  wide,
  behind,
  in_front_of,
  below,
  above,
  right_of,
  left_of,
  vertical,
  horizontal,
  touching_ground,
  off_ground,
};

struct Clause {
  Category category;
  std::vector<BodyPart> subject;  // one part, or two for distance / relative position
  Qualifier qualifier;

  /// Throws DomainError when the qualifier or subjects do not fit the category.
  void validate() const;
  bool operator==(const Clause&) const = default;
};

struct PostureScript {
  std::vector<Clause> clauses;

  void validate() const;
  std::string text() const;
  bool operator==(const PostureScript&) const = default;
};

/// Fixed describer thresholds (angles in degrees, distances in meters or
/// multiples of shoulder width).
struct Thresholds {
  double straight_above = 150.0;
  double completely_bent_below = 60.0;
  double close_below = 0.5;
  double shoulder_width_below = 1.5;
  double spread_below = 2.5;
  double relative_margin = 0.05;
  double orientation_cone = 20.0;
  double ground_margin = 0.05;
};
inline constexpr Thresholds kThresholds{};

std::string_view to_string(Category c);
std::string_view to_string(BodyPart p);
std::string_view to_string(Qualifier q);
Category category_from_string(std::string_view s);
BodyPart body_part_from_string(std::string_view s);
Qualifier qualifier_from_string(std::string_view s);

BodyPart mirror(BodyPart p);

// ---- describer ------------------------------------------------------------

PostureScript describe_pose(const motion::PoseVector& pose,
                            const motion::Skeleton& skeleton = motion::Skeleton::canonical());

/// Bucketing helpers shared by the describer and tests.
Qualifier bend_bucket(double interior_angle_degrees);
Qualifier distance_bucket(double distance_over_shoulder_width);

/// Mirror image of a script: left/right subjects swap, lateral relations flip,
/// and symmetric pairs are put back in describer order.
PostureScript mirror_script(const PostureScript& s);

// ---- text -----------------------------------------------------------------

std::string render_script(const PostureScript& s);

struct ParseResult {
  PostureScript script;
  int skipped = 0;
};

/// Template matching tolerant of case and whitespace. Throws DomainError when
/// no sentence is recognized.
ParseResult parse_script(std::string_view text);

// ---- tokens ---------------------------------------------------------------

class ScriptVocabulary {
 public:
  static const ScriptVocabulary& standard();

  static constexpr int kPad = 0;
  std::size_t size() const { return tokens_.size(); }
  int id(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Greedy longest-phrase segmentation of lowercase text. Throws DomainError
  /// on an out-of-vocabulary word.
  std::vector<int> encode(std::string_view text) const;

 private:
  explicit ScriptVocabulary(std::vector<std::string> tokens);
  std::vector<std::string> tokens_;
  std::map<std::string, int, std::less<>> index_;
  std::size_t max_words_ = 1;
};

constexpr std::size_t kDefaultTokenLength = 64;

/// Token ids of the rendered script, padded or truncated to length.
std::vector<int> tokenize(const PostureScript& s, std::size_t length = kDefaultTokenLength);
/// Token ids without padding.
std::vector<int> tokenize_unpadded(const PostureScript& s);

// ---- scoring --------------------------------------------------------------

/// Fraction of the script's clauses that agree with describe_pose(pose): 1 for
/// the same qualifier, 0.5 for an adjacent bend/distance bucket, else 0.
double script_consistency(const motion::PoseVector& pose, const PostureScript& s,
                          const motion::Skeleton& skeleton = motion::Skeleton::canonical());

// ---- serialization --------------------------------------------------------

nlohmann::json to_json(const PostureScript& s);
PostureScript script_from_json(const nlohmann::json& j);

}  // namespace promo::script
