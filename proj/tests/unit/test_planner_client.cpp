#include "doctest.h"

#include <atomic>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <thread>

#include "promo/planner/planner.hpp"
// After the Eigen-using headers: resolv.h, pulled in by httplib, defines _res.
#include "httplib.h"

using namespace promo;
using namespace promo::planner;

namespace {

const char* const kBlock =
    "His left knee is slightly bent. His right knee is straight. His left foot is slightly above the ground.";

std::string reply_with(std::size_t blocks) {
  std::string s;
  for (std::size_t k = 1; k <= blocks; ++k) s += "POSE " + std::to_string(k) + ": " + kBlock + "\n";
  return s;
}

std::string completion(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

/// Local chat-completions endpoint whose replies come from a handler.
class MockServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&, int call)>;

  explicit MockServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      int call;
      {
        std::lock_guard lock(mutex_);
        requests_.push_back(req.body);
        auth_ = req.get_header_value("Authorization");
        call = static_cast<int>(requests_.size());
      }
      handler_(req, res, call);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockServer() {
    server_.stop();
    thread_.join();
  }

  EndpointConfig config() const {
    EndpointConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    c.model = "mock-model";
    c.api_key_env = "PROMO_TEST_PLANNER_KEY";
    c.timeout_seconds = 5.0;
    c.max_retries = 2;
    c.retry_backoff_ms = 0;
    return c;
  }
  std::vector<nlohmann::json> requests() const {
    std::lock_guard lock(mutex_);
    std::vector<nlohmann::json> out;
    for (const auto& b : requests_) out.push_back(nlohmann::json::parse(b));
    return out;
  }
  std::string auth() const {
    std::lock_guard lock(mutex_);
    return auth_;
  }

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  mutable std::mutex mutex_;
  std::vector<std::string> requests_;
  std::string auth_;
};

struct KeyGuard {
  KeyGuard() { setenv("PROMO_TEST_PLANNER_KEY", "test-key", 1); }
  ~KeyGuard() { unsetenv("PROMO_TEST_PLANNER_KEY"); }
};

PlannerRequest request(std::size_t frames) { return {"Jump on one foot", frames, 20}; }

std::string section(const std::string& text, const std::string& header) {
  const auto begin = text.find(header);
  REQUIRE(begin != std::string::npos);
  const auto end = text.find("\n## ", begin + header.size());
  return text.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
}

}  // namespace

TEST_CASE("prompt holds the five rules, the consistency instruction and the request") {
  const auto p = build_prompt({"wave with the right hand", 5, 30});
  for (const char* rule : {"1. Bend:", "2. Distance:", "3. Relative position:", "4. Orientation:", "5. Ground contact:"})
    CHECK(p.system.find(rule) != std::string::npos);
  CHECK(p.system.find("temporally consistent") != std::string::npos);
  CHECK(p.system.find("## Examples") != std::string::npos);
  CHECK(p.user.find("wave with the right hand") != std::string::npos);
  CHECK(p.user.find("Number of key poses: 5") != std::string::npos);
  CHECK(p.user.find("Frames per second: 30") != std::string::npos);
}

TEST_CASE("output format enumerates exactly POSE 1..F") {
  const auto fmt = section(build_prompt(request(3)).system, "## Output format");
  for (int k = 1; k <= 3; ++k) CHECK(fmt.find("POSE " + std::to_string(k) + ":") != std::string::npos);
  CHECK(fmt.find("POSE 4:") == std::string::npos);
  CHECK(fmt.find("exactly 3 lines") != std::string::npos);
}

TEST_CASE("prompts are byte-stable and requests are validated") {
  CHECK(build_prompt(request(4)).system == build_prompt(request(4)).system);
  CHECK(build_prompt(request(4)).user == build_prompt(request(4)).user);
  CHECK(build_prompt(request(4)).system != build_prompt(request(5)).system);
  CHECK_THROWS_AS(build_prompt({"x", 0, 20}), DomainError);
  CHECK_THROWS_AS(build_prompt({"x", 17, 20}), DomainError);
  CHECK_THROWS_AS(build_prompt({"x", 4, 25}), DomainError);
  CHECK_THROWS_AS(build_prompt({"  ", 4, 20}), DomainError);
}

TEST_CASE("the prompt's examples parse with the script grammar") {
  const auto ex = section(build_prompt(request(2)).system, "## Examples");
  const auto plan = parse_plan(ex);
  CHECK(plan.blocks == 4);
  CHECK(plan.failed == 0);
}

TEST_CASE("plan parsing splits on POSE markers") {
  const auto ok = parse_plan("Here is the plan.\n" + reply_with(3));
  CHECK(ok.blocks == 3);
  CHECK(ok.complete(3));
  CHECK_FALSE(ok.complete(4));
  CHECK(ok.scripts[0].clauses.size() == 3);

  const auto lower = parse_plan("pose 1: His torso is vertical.\n  Pose 2 : His torso is horizontal.");
  CHECK(lower.complete(2));

  const auto bad = parse_plan("POSE 1: His torso is vertical.\nPOSE 2: dance wildly\nPOSE 3:");
  CHECK(bad.blocks == 3);
  CHECK(bad.failed == 2);
  CHECK_FALSE(bad.complete(3));
  CHECK(parse_plan("no markers here").blocks == 0);
}

TEST_CASE("planner client returns F scripts and the raw reply") {
  KeyGuard key;
  const std::string content = "Sure.\n" + reply_with(3);
  MockServer server([&](const httplib::Request&, httplib::Response& res, int) {
    res.set_content(completion(content), "application/json");
  });
  const auto r = plan_motion(request(3), server.config());
  CHECK(r.scripts.size() == 3);
  CHECK(r.raw_text == content);
  const auto reqs = server.requests();
  REQUIRE(reqs.size() == 1);
  CHECK(reqs[0].at("model") == "mock-model");
  CHECK(reqs[0].at("messages").size() == 2);
  CHECK(reqs[0].at("messages")[0].at("role") == "system");
  CHECK(reqs[0].at("messages")[1].at("role") == "user");
  CHECK(server.auth() == "Bearer test-key");
}

TEST_CASE("a short reply triggers one repair prompt") {
  KeyGuard key;
  MockServer server([](const httplib::Request&, httplib::Response& res, int call) {
    res.set_content(completion(reply_with(call == 1 ? 2 : 3)), "application/json");
  });
  const auto r = plan_motion(request(3), server.config());
  CHECK(r.scripts.size() == 3);
  CHECK(r.raw_text == reply_with(3));
  const auto reqs = server.requests();
  REQUIRE(reqs.size() == 2);
  const auto& msgs = reqs[1].at("messages");
  REQUIRE(msgs.size() == 4);
  CHECK(msgs[2].at("role") == "assistant");
  CHECK(msgs[2].at("content") == reply_with(2));
  CHECK(msgs[3].at("content").get<std::string>().find("exactly 3") != std::string::npos);
}

TEST_CASE("a reply that stays short after repair is an error") {
  KeyGuard key;
  MockServer server([](const httplib::Request&, httplib::Response& res, int) {
    res.set_content(completion(reply_with(2)), "application/json");
  });
  CHECK_THROWS_AS(plan_motion(request(3), server.config()), PlanFormatError);
  CHECK(server.requests().size() == 2);
}

TEST_CASE("server errors are retried and then surfaced with the attempt count") {
  KeyGuard key;
  MockServer server([](const httplib::Request&, httplib::Response& res, int) { res.status = 500; });
  auto cfg = server.config();
  cfg.max_retries = 3;
  try {
    plan_motion(request(2), cfg);
    FAIL("expected a transport error");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 4);
    CHECK(std::string(e.what()).find("4 attempts") != std::string::npos);
  }
  CHECK(server.requests().size() == 4);
}

TEST_CASE("a transient failure is recovered by a retry") {
  KeyGuard key;
  MockServer server([](const httplib::Request&, httplib::Response& res, int call) {
    if (call == 1)
      res.status = 503;
    else
      res.set_content(completion(reply_with(2)), "application/json");
  });
  CHECK(plan_motion(request(2), server.config()).scripts.size() == 2);
  CHECK(server.requests().size() == 2);
}

TEST_CASE("client errors are not retried") {
  KeyGuard key;
  MockServer server([](const httplib::Request&, httplib::Response& res, int) { res.status = 401; });
  try {
    plan_motion(request(2), server.config());
    FAIL("expected a transport error");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 1);
  }
  CHECK(server.requests().size() == 1);
}

TEST_CASE("malformed completion bodies are format errors") {
  KeyGuard key;
  MockServer server([](const httplib::Request&, httplib::Response& res, int) {
    res.set_content("{\"nope\": 1}", "application/json");
  });
  CHECK_THROWS_AS(plan_motion(request(2), server.config()), PlanFormatError);
}

TEST_CASE("missing API key and unreachable endpoints") {
  MockServer server([](const httplib::Request&, httplib::Response& res, int) {
    res.set_content(completion(reply_with(2)), "application/json");
  });
  unsetenv("PROMO_TEST_PLANNER_KEY");
  CHECK_THROWS_AS(plan_motion(request(2), server.config()), DomainError);
  CHECK(server.requests().empty());

  KeyGuard key;
  EndpointConfig dead = server.config();
  dead.base_url = "http://127.0.0.1:1/v1";
  dead.max_retries = 1;
  dead.timeout_seconds = 1.0;
  try {
    plan_motion(request(2), dead);
    FAIL("expected a transport error");
  } catch (const TransportError& e) {
    CHECK(e.attempts() == 2);
  }
  dead.base_url = "ftp://example";
  CHECK_THROWS_AS(plan_motion(request(2), dead), DomainError);
}

TEST_CASE("stub planner: jump on one foot lifts a foot in the middle") {
  const auto r = stub_plan({"Jump on one foot", 3, 20});
  REQUIRE(r.scripts.size() == 3);
  bool off = false;
  for (const auto& c : r.scripts[1].clauses)
    off = off || (c.category == script::Category::ground_contact && c.qualifier == script::Qualifier::off_ground);
  CHECK(off);
  CHECK(parse_plan(r.raw_text).complete(3));
}

TEST_CASE("stub planner falls back to the neutral plan and is deterministic") {
  for (std::size_t F : {1u, 2u, 7u, 16u}) {
    const auto r = stub_plan({"contemplate the universe", F, 20});
    CHECK(r.scripts.size() == F);
    const auto again = stub_plan({"contemplate the universe", F, 20});
    CHECK(again.scripts == r.scripts);
    CHECK(again.raw_text == r.raw_text);
  }
  // Keywords match at word starts only.
  CHECK(stub_plan({"go shopping", 2, 20}).scripts == stub_plan({"idle", 2, 20}).scripts);
  CHECK(stub_plan({"A person squats down", 3, 20}).scripts != stub_plan({"idle", 3, 20}).scripts);
}

TEST_CASE("plan library parses and resampling spans the plan") {
  const auto& lib = plan_library();
  bool fallback = false;
  for (const auto& plan : lib.at("plans")) {
    fallback = fallback || plan.at("name") == lib.at("fallback");
    for (const auto& s : plan.at("scripts")) CHECK(script::parse_script(s.get<std::string>()).skipped == 0);
  }
  CHECK(fallback);
  CHECK(resample_index(0, 3, 3) == 0);
  CHECK(resample_index(1, 3, 3) == 1);
  CHECK(resample_index(2, 3, 3) == 2);
  CHECK(resample_index(0, 1, 4) == 2);
  CHECK(resample_index(5, 6, 2) == 1);
  for (std::size_t F = 1; F <= 16; ++F)
    for (std::size_t k = 1; k < F; ++k) CHECK(resample_index(k, F, 3) >= resample_index(k - 1, F, 3));
  CHECK_THROWS_AS(resample_index(3, 3, 3), DomainError);
}
