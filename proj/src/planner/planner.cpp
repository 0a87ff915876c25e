#include "promo/planner/planner.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdlib>
#include <regex>
#include <thread>

#include "httplib.h"

namespace promo::planner {

namespace detail {
extern const char* const kPlanLibraryJson;
}

void PlannerRequest::validate() const {
  if (frames < 1 || frames > kMaxPlanFrames) throw DomainError("planner: frame count must lie in [1, 16]");
  if (fps != 10 && fps != 20 && fps != 30) throw DomainError("planner: fps must be 10, 20 or 30");
  if (std::all_of(user_prompt.begin(), user_prompt.end(), [](unsigned char c) { return std::isspace(c); }))
    throw DomainError("planner: empty motion description");
}

void EndpointConfig::validate() const {
  if (!(timeout_seconds > 0.0)) throw DomainError("planner endpoint: timeout must be positive");
  if (max_retries < 0) throw DomainError("planner endpoint: retries must be nonnegative");
  if (retry_backoff_ms < 0) throw DomainError("planner endpoint: backoff must be nonnegative");
  if (base_url.empty() || model.empty() || api_key_env.empty())
    throw DomainError("planner endpoint: base URL, model and key variable are required");
}

namespace {

const char* const kSystemIntro =
    "You are a motion planner. Given a short description of a human motion, you plan the motion as a sequence of "
    "key poses and describe each key pose with a posture script. A posture script is a list of short sentences, each "
    "stating one fact about the body built from the rules below. Use only the listed body parts and phrases.\n";

const char* const kRules =
    "## Rules\n"
    "1. Bend: the left elbow, right elbow, left knee or right knee is completely bent, slightly bent or straight.\n"
    "   Example: \"His left knee is slightly bent.\"\n"
    "2. Distance: the left hand and right hand, the left knee and right knee, or the left foot and right foot are "
    "close, shoulder width apart, spread apart or wide apart.\n"
    "   Example: \"His left foot and right foot are shoulder width apart.\"\n"
    "3. Relative position: a hand relative to the shoulder on its side, a knee relative to the hip on its side, or "
    "the left foot relative to the right foot is behind, in front of, below, above, at the left of or at the right "
    "of it.\n"
    "   Example: \"His right hand is above his right shoulder.\"\n"
    "4. Orientation: the torso, left arm, right arm, left thigh or right thigh is vertical or horizontal.\n"
    "   Example: \"His torso is vertical.\"\n"
    "5. Ground contact: the left foot or right foot is touching the ground or slightly above the ground.\n"
    "   Example: \"His right foot is slightly above the ground.\"\n";

const char* const kConsistency =
    "## Temporal consistency\n"
    "The key poses are evenly spaced in time and together must form one continuous, physically plausible motion. "
    "Keep every body part that does not need to move unchanged between neighboring key poses, and change the rest "
    "gradually so the sequence stays temporally consistent.\n";

const char* const kExamples =
    "## Examples\n"
    "Description: \"stand still\", 2 key poses\n"
    "POSE 1: His left knee is straight. His right knee is straight. His torso is vertical. His left arm is vertical. "
    "His right arm is vertical. His left foot is touching the ground. His right foot is touching the ground.\n"
    "POSE 2: His left knee is straight. His right knee is straight. His torso is vertical. His left arm is vertical. "
    "His right arm is vertical. His left foot is touching the ground. His right foot is touching the ground.\n"
    "Description: \"raise the left leg\", 2 key poses\n"
    "POSE 1: His left knee is straight. His right knee is straight. His left thigh is vertical. His right thigh is "
    "vertical. His left foot is touching the ground. His right foot is touching the ground.\n"
    "POSE 2: His left knee is slightly bent. His right knee is straight. His left knee is in front of his left hip. "
    "His right thigh is vertical. His left foot is slightly above the ground. His right foot is touching the ground.\n";

std::string output_format(std::size_t frames) {
  std::string s =
      "## Output format\n"
      "Answer with exactly " +
      std::to_string(frames) +
      " lines and nothing else. Line k starts with \"POSE k:\" followed by the posture script of key pose k:\n";
  for (std::size_t k = 1; k <= frames; ++k) s += "POSE " + std::to_string(k) + ": <posture script>\n";
  return s;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string format_plan(const std::vector<script::PostureScript>& scripts) {
  std::string out;
  for (std::size_t k = 0; k < scripts.size(); ++k)
    out += "POSE " + std::to_string(k + 1) + ": " + script::render_script(scripts[k]) + "\n";
  return out;
}

struct Url {
  std::string scheme_host_port;
  std::string path_prefix;
};

Url split_url(const std::string& base) {
  static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(base, m, re)) throw DomainError("planner endpoint: malformed base URL " + base);
  Url u{m[1].str(), m[2].str()};
  while (!u.path_prefix.empty() && u.path_prefix.back() == '/') u.path_prefix.pop_back();
  return u;
}

/// POST one chat-completion request and return the first choice's content.
std::string chat(const EndpointConfig& cfg, const std::string& api_key, const nlohmann::json& messages) {
  const Url url = split_url(cfg.base_url);
  httplib::Client client(url.scheme_host_port);
  const auto timeout = std::chrono::duration<double>(cfg.timeout_seconds);
  const auto usec = std::chrono::duration_cast<std::chrono::microseconds>(timeout);
  client.set_connection_timeout(usec);
  client.set_read_timeout(usec);
  client.set_write_timeout(usec);
  const httplib::Headers headers = {{"Authorization", "Bearer " + api_key}};
  const std::string body = nlohmann::json{{"model", cfg.model}, {"messages", messages}, {"temperature", 0}}.dump();
  const std::string path = url.path_prefix + "/chat/completions";

  const int attempts = cfg.max_retries + 1;
  std::string last_error;
  int backoff = cfg.retry_backoff_ms;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
    } else if (res->status == 429 || res->status >= 500) {
      last_error = "server returned HTTP " + std::to_string(res->status);
    } else if (res->status < 200 || res->status >= 300) {
      throw TransportError("planner endpoint rejected the request with HTTP " + std::to_string(res->status), attempt);
    } else {
      try {
        const auto reply = nlohmann::json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
      } catch (const nlohmann::json::exception& e) {
        throw PlanFormatError(std::string("planner endpoint returned an unexpected body: ") + e.what());
      }
    }
    if (attempt < attempts && backoff > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
  }
  throw TransportError("planner endpoint unreachable after " + std::to_string(attempts) + " attempts (" + last_error +
                           ")",
                       attempts);
}

}  // namespace

Prompt build_prompt(const PlannerRequest& req) {
  req.validate();
  Prompt p;
  p.system = std::string(kSystemIntro) + "\n" + kRules + "\n" + kConsistency + "\n" + output_format(req.frames) + "\n" +
             kExamples;
  p.user = "Motion description: " + req.user_prompt + "\nNumber of key poses: " + std::to_string(req.frames) +
           "\nFrames per second: " + std::to_string(req.fps) + "\n";
  return p;
}

std::string repair_message(const PlannerRequest& req, std::size_t usable_blocks) {
  return "Your answer contained " + std::to_string(usable_blocks) + " usable POSE lines, but exactly " +
         std::to_string(req.frames) +
         " are required. Answer again with exactly " + std::to_string(req.frames) +
         " lines POSE 1: to POSE " + std::to_string(req.frames) +
         ":, each followed by sentences built only from the five rules.";
}

ParsedPlan parse_plan(std::string_view text) {
  static const std::regex marker(R"((^|\n)[ \t]*pose[ \t]*\d+[ \t]*:)", std::regex::icase);
  const std::string s(text);
  std::vector<std::pair<std::size_t, std::size_t>> spans;  // [content begin, marker begin of the next block)
  for (auto it = std::sregex_iterator(s.begin(), s.end(), marker); it != std::sregex_iterator(); ++it) {
    const std::size_t start = static_cast<std::size_t>(it->position()) + static_cast<std::size_t>(it->length());
    if (!spans.empty()) spans.back().second = static_cast<std::size_t>(it->position());
    spans.emplace_back(start, s.size());
  }
  ParsedPlan plan;
  plan.blocks = spans.size();
  for (const auto& [begin, end] : spans) {
    try {
      auto parsed = script::parse_script(std::string_view(s).substr(begin, end - begin));
      if (parsed.script.clauses.empty()) {
        ++plan.failed;
        continue;
      }
      plan.scripts.push_back(std::move(parsed.script));
    } catch (const DomainError&) {
      ++plan.failed;
    }
  }
  return plan;
}

PlannerResponse plan_motion(const PlannerRequest& req, const EndpointConfig& cfg) {
  req.validate();
  cfg.validate();
  const char* key = std::getenv(cfg.api_key_env.c_str());
  if (!key || !*key) throw DomainError("planner: environment variable " + cfg.api_key_env + " is not set");

  const Prompt prompt = build_prompt(req);
  nlohmann::json messages = nlohmann::json::array(
      {{{"role", "system"}, {"content", prompt.system}}, {{"role", "user"}, {"content", prompt.user}}});
  std::string reply = chat(cfg, key, messages);
  ParsedPlan plan = parse_plan(reply);
  if (!plan.complete(req.frames)) {
    messages.push_back({{"role", "assistant"}, {"content", reply}});
    messages.push_back({{"role", "user"}, {"content", repair_message(req, plan.scripts.size())}});
    reply = chat(cfg, key, messages);
    plan = parse_plan(reply);
    if (!plan.complete(req.frames))
      throw PlanFormatError("planner reply still has " + std::to_string(plan.scripts.size()) + " usable of " +
                            std::to_string(req.frames) + " POSE blocks after one repair");
  }
  return {std::move(plan.scripts), std::move(reply)};
}

const nlohmann::json& plan_library() {
  static const nlohmann::json library = nlohmann::json::parse(detail::kPlanLibraryJson);
  return library;
}

std::size_t resample_index(std::size_t k, std::size_t frames, std::size_t steps) {
  if (frames == 0 || steps == 0 || k >= frames) throw DomainError("resample_index: index out of range");
  return std::min(steps - 1, ((2 * k + 1) * steps) / (2 * frames));
}

PlannerResponse stub_plan(const PlannerRequest& req) {
  req.validate();
  const auto& lib = plan_library();
  const std::string prompt = lowercase(req.user_prompt);
  auto word_at = [&](const std::string& kw) {
    for (std::size_t pos = prompt.find(kw); pos != std::string::npos; pos = prompt.find(kw, pos + 1))
      if (pos == 0 || !std::isalpha(static_cast<unsigned char>(prompt[pos - 1]))) return true;
    return false;
  };
  const nlohmann::json* chosen = nullptr;
  for (const auto& plan : lib.at("plans")) {
    if (plan.at("name") == lib.at("fallback")) continue;
    for (const auto& kw : plan.at("keywords"))
      if (word_at(kw.get<std::string>())) {
        chosen = &plan;
        break;
      }
    if (chosen) break;
  }
  if (!chosen)
    for (const auto& plan : lib.at("plans"))
      if (plan.at("name") == lib.at("fallback")) chosen = &plan;
  if (!chosen) throw DomainError("plan library has no fallback plan");

  const auto& steps = chosen->at("scripts");
  PlannerResponse r;
  for (std::size_t k = 0; k < req.frames; ++k)
    r.scripts.push_back(script::parse_script(steps.at(resample_index(k, req.frames, steps.size())).get<std::string>()).script);
  r.raw_text = format_plan(r.scripts);
  return r;
}

}  // namespace promo::planner
