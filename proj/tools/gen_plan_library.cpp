// Regenerates resources/plan_library.json, the keyword plans behind the
// offline planner. Each plan step is a seeded template pose described by the
// script engine, so the library always parses with the current grammar.

#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "promo/pipeline/synth.hpp"

using namespace promo;
using pipeline::PoseTemplate;

namespace {

/// A template pose, or the mirror image of an earlier step when mirror_of >= 0.
struct Step {
  PoseTemplate pose;
  int mirror_of = -1;
};

struct PlanSpec {
  std::string name;
  std::vector<std::string> keywords;
  std::vector<Step> steps;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Write the bundled planner library"};
  std::string out = "resources/plan_library.json";
  std::uint64_t seed = 2024;
  app.add_option("-o,--output", out, "Output path");
  app.add_option("--seed", seed, "Pose seed");
  CLI11_PARSE(app, argc, argv);

  using P = PoseTemplate;
  const std::vector<PlanSpec> specs = {
      {"jump", {"jump", "hop", "leap"}, {{P::squat}, {P::lift_leg}, {P::stand}}},
      {"squat", {"squat", "crouch"}, {{P::stand}, {P::squat}, {P::stand}}},
      {"walk", {"walk", "step", "stride", "march"}, {{P::stride}, {P::stand}, {P::stride, 0}, {P::stand}}},
      {"wave", {"wave", "greet", "hello"}, {{P::stand}, {P::wave}, {P::stand}, {P::wave}}},
      {"bow", {"bow", "bend"}, {{P::stand}, {P::bend_forward}, {P::stand}}},
      {"kneel", {"kneel"}, {{P::stand}, {P::kneel}, {P::kneel}}},
      {"sit", {"sit", "chair"}, {{P::stand}, {P::sit}, {P::sit}}},
      {"reach", {"reach", "stretch", "raise"}, {{P::stand}, {P::reach_up}, {P::stand}}},
      {"t_pose", {"t-pose", "t pose", "arms out"}, {{P::stand}, {P::t_pose}, {P::t_pose}}},
      {"kick", {"kick", "one leg", "balance"}, {{P::stand}, {P::lift_leg}, {P::stand}}},
  };

  nlohmann::json plans = nlohmann::json::array();
  std::uint64_t index = 0;
  auto emit = [&](const PlanSpec& spec) {
    std::vector<script::PostureScript> described;
    nlohmann::json scripts = nlohmann::json::array();
    for (std::size_t k = 0; k < spec.steps.size(); ++k) {
      const Step& step = spec.steps[k];
      if (step.mirror_of >= 0) {
        described.push_back(script::mirror_script(described.at(static_cast<std::size_t>(step.mirror_of))));
      } else {
        Rng rng(derive_seed(seed, {index, k}));
        described.push_back(script::describe_pose(pipeline::synth_pose(step.pose, rng)));
      }
      scripts.push_back(script::render_script(described.back()));
    }
    plans.push_back({{"name", spec.name}, {"keywords", spec.keywords}, {"scripts", scripts}});
    ++index;
  };
  for (const auto& s : specs) emit(s);
  const PlanSpec neutral{"neutral", {}, {{P::stand}, {P::stand}}};
  emit(neutral);

  std::ofstream f(out);
  if (!f) {
    std::cerr << "cannot write " << out << "\n";
    return 1;
  }
  f << nlohmann::json{{"plans", plans}, {"fallback", "neutral"}}.dump(2) << "\n";
  std::cout << "wrote " << plans.size() << " plans to " << out << "\n";
  return 0;
}
