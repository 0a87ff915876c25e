#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "promo/core/error.hpp"
#include "promo/script/script.hpp"

namespace promo::planner {

inline constexpr std::size_t kMaxPlanFrames = 16;

struct PlannerRequest {
  std::string user_prompt;
  std::size_t frames = 4;  // F, the number of keyposes to plan
  int fps = 20;

  /// Throws DomainError unless 1 <= F <= 16, fps is 10, 20 or 30 and the
  /// prompt is not blank.
  void validate() const;
};

struct EndpointConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-3.5-turbo";
  std::string api_key_env = "PROMO_LLM_API_KEY";
  double timeout_seconds = 60.0;
  int max_retries = 2;
  int retry_backoff_ms = 500;  // doubled after each failed attempt

  void validate() const;
};

struct PlannerResponse {
  std::vector<script::PostureScript> scripts;
  std::string raw_text;  // the model output the scripts were parsed from
};

struct Prompt {
  std::string system;
  std::string user;
};

/// Task description, the five rule families with the body parts each applies
/// to, the "POSE k:" output format for k = 1..F and two worked examples.
/// Equal requests give identical bytes.
Prompt build_prompt(const PlannerRequest& req);

/// Follow-up message sent once when a reply does not hold F usable blocks.
std::string repair_message(const PlannerRequest& req, std::size_t usable_blocks);

struct ParsedPlan {
  std::vector<script::PostureScript> scripts;  // one per block that parsed
  std::size_t blocks = 0;                      // POSE blocks found
  std::size_t failed = 0;                      // blocks with no recognizable clause

  bool complete(std::size_t frames) const { return failed == 0 && blocks == frames && scripts.size() == frames; }
};

/// Splits a reply on "POSE k:" markers (case-insensitive, at line starts) and
/// parses each block with the script grammar. Text before the first marker is
/// ignored.
ParsedPlan parse_plan(std::string_view text);

/// Thrown when the planner's reply is still unusable after the repair prompt.
class PlanFormatError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// One chat-completion exchange with retries on connection failures, timeouts,
/// 429 and 5xx; a single repair re-prompt when the reply does not parse into
/// exactly F scripts. Throws DomainError when the API key variable is unset,
/// TransportError (with the attempt count) when retries run out and
/// PlanFormatError when the repaired reply is still unusable.
PlannerResponse plan_motion(const PlannerRequest& req, const EndpointConfig& cfg);

/// Offline planner: the first library plan with a keyword contained in the
/// lowercased prompt, else the neutral standing plan, resampled to F scripts
/// by nearest index.
PlannerResponse stub_plan(const PlannerRequest& req);

/// The bundled library as parsed JSON.
const nlohmann::json& plan_library();

/// Index of the library step used for keypose k of F when the plan has K steps:
/// floor((k + 1/2) K / F).
std::size_t resample_index(std::size_t k, std::size_t frames, std::size_t steps);

}  // namespace promo::planner
