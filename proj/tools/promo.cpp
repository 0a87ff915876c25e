// Command-line front end: synthetic data, training, planning, generation,
// evaluation and export.

#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "promo/pipeline/export.hpp"
#include "promo/pipeline/pipeline.hpp"
#include "promo/planner/planner.hpp"

using namespace promo;
using namespace promo::pipeline;

namespace {

PipelineConfig config_or_default(const std::string& path) {
  if (path.empty()) {
    PipelineConfig c;
    c.validate();
    return c;
  }
  return load_config(path);
}

template <class F>
int run(const std::string& command, F&& body) {
  try {
    body();
    return 0;
  } catch (const StageError& e) {
    std::cerr << "promo " << command << ": " << e.what() << '\n';
  } catch (const std::exception& e) {
    std::cerr << "promo " << command << ": [" << command << "] " << e.what() << '\n';
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  nn::retain_tensor_memory();

  CLI::App app{"Keypose-planned text-to-motion generation"};
  app.require_subcommand(1);
  std::function<int()> action;

  // synth-data
  std::string synth_kind, synth_out, synth_config;
  std::size_t synth_n = 0, synth_keyposes = 4;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth-data", "Write a synthetic pose or motion dataset (JSONL)");
  synth->add_option("kind", synth_kind, "poses or motions")->required()->check(CLI::IsMember({"poses", "motions"}));
  synth->add_option("--n", synth_n, "Number of records")->required();
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--out", synth_out, "Output file")->required();
  synth->add_option("--keyposes", synth_keyposes, "Plan length of each motion")->check(CLI::Range(1, 16));
  synth->add_option("--config", synth_config, "INI config whose hash is recorded");
  synth->callback([&] {
    action = [&] {
      return run("synth-data", [&] {
        const auto hash = config_or_default(synth_config).hash();
        if (synth_kind == "poses")
          write_synth_pose_dataset(synth_out, synth_n, synth_seed, hash);
        else
          write_synth_motion_dataset(synth_out, synth_n, synth_seed, hash, synth_keyposes);
        std::cout << "wrote " << synth_n << " " << synth_kind << " to " << synth_out << '\n';
      });
    };
  });

  // train
  std::string train_kind, train_data, train_out, train_config;
  int train_epochs = 0;
  std::uint64_t train_seed = 0;
  auto* train = app.add_subcommand("train", "Train a model and write its checkpoint");
  train->add_option("kind", train_kind, "posture, go, encoders or extractors")
      ->required()
      ->check(CLI::IsMember({"posture", "go", "encoders", "extractors"}));
  train->add_option("--data", train_data, "Dataset file")->required()->check(CLI::ExistingFile);
  train->add_option("--epochs", train_epochs, "Training epochs")->required()->check(CLI::NonNegativeNumber);
  train->add_option("--seed", train_seed, "Training seed");
  train->add_option("--out", train_out, "Checkpoint file")->required();
  train->add_option("--config", train_config, "INI config with model widths and learning rates");
  train->callback([&] {
    action = [&] {
      return run("train", [&] {
        const auto kind = model_kind_from_string(train_kind);
        const auto outcome = train_model(kind, train_data, train_epochs, train_seed, config_or_default(train_config));
        outcome.checkpoint.save(train_out);
        std::cout << "trained " << train_kind << " for " << train_epochs << " epochs";
        if (!outcome.loss_history.empty())
          std::cout << ", loss " << outcome.loss_history.front() << " -> " << outcome.loss_history.back();
        std::cout << ", wrote " << train_out << '\n';
      });
    };
  });

  // plan
  std::string plan_prompt, plan_config;
  std::size_t plan_frames = 4;
  int plan_fps = 20;
  bool plan_live = false;
  auto* plan = app.add_subcommand("plan", "Print the posture-script plan of a prompt");
  plan->add_option("--prompt", plan_prompt, "Motion description")->required();
  plan->add_option("--frames", plan_frames, "Number of key poses F")->check(CLI::Range(1, 16));
  plan->add_option("--fps", plan_fps, "Frames per second")->check(CLI::IsMember({10, 20, 30}));
  plan->add_flag("--live", plan_live, "Query the chat-completion endpoint instead of the offline library");
  plan->add_option("--config", plan_config, "INI config with the planner endpoint");
  plan->callback([&] {
    action = [&] {
      return run("plan", [&] {
        const planner::PlannerRequest req{plan_prompt, plan_frames, plan_fps};
        const auto response = plan_live ? planner::plan_motion(req, config_or_default(plan_config).endpoint)
                                        : planner::stub_plan(req);
        std::cout << response.raw_text;
        if (!response.raw_text.empty() && response.raw_text.back() != '\n') std::cout << '\n';
      });
    };
  });

  // generate
  std::string gen_prompt, gen_config, gen_out;
  std::uint64_t gen_seed = 0;
  std::optional<std::size_t> gen_candidates, gen_frames;
  std::optional<double> gen_guidance;
  std::optional<unsigned> gen_threads;
  auto* generate = app.add_subcommand("generate", "Generate a motion from a prompt");
  generate->add_option("--prompt", gen_prompt, "Motion description")->required();
  generate->add_option("--config", gen_config, "INI config naming the checkpoints")->required()->check(CLI::ExistingFile);
  generate->add_option("--seed", gen_seed, "Generation seed");
  generate->add_option("--out", gen_out, "Motion file")->required();
  generate->add_option("--candidates", gen_candidates, "Posture candidates per key pose (L)");
  generate->add_option("--guidance", gen_guidance, "Classifier-free guidance weight w");
  generate->add_option("--frames", gen_frames, "Number of key poses F");
  generate->add_option("--threads", gen_threads, "Workers for candidate sampling");
  generate->callback([&] {
    action = [&] {
      return run("generate", [&] {
        auto config = load_config(gen_config);
        if (gen_candidates) config.candidates = *gen_candidates;
        if (gen_guidance) config.guidance = *gen_guidance;
        if (gen_frames) config.frames = *gen_frames;
        if (gen_threads) config.threads = *gen_threads;
        config.validate();
        const auto models = load_generation_models(config);
        const auto result = run_pipeline(gen_prompt, config, models, gen_seed);
        write_pipeline_result(result, gen_out);
        std::cout << result.provenance.at("raw_plan").get<std::string>() << "path";
        for (int i : result.provenance.at("path")) std::cout << ' ' << i;
        std::cout << "\nwrote " << gen_out << '\n';
      });
    };
  });

  // evaluate
  EvaluateRequest eval_req;
  std::string eval_out, eval_config, eval_extractors;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Compute metrics between generated and reference motions");
  evaluate_cmd->add_option("--generated", eval_req.generated, "Generated motions")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--reference", eval_req.reference, "Reference motions")->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--metrics", eval_req.metrics, "Subset of ape ave smoothness fid r_precision mm_distance")
      ->check(CLI::IsMember(kAllMetrics))
      ->capture_default_str();
  evaluate_cmd->add_option("--extractors", eval_extractors, "Feature extractor checkpoint");
  evaluate_cmd->add_option("--config", eval_config, "INI config (its extractor path is the default)");
  evaluate_cmd->add_option("--out", eval_out, "Report file")->required();
  evaluate_cmd->callback([&] {
    action = [&] {
      return run("evaluate", [&] {
        const auto config = config_or_default(eval_config);
        eval_req.extractors = eval_extractors.empty() ? config.paths.extractors : std::filesystem::path(eval_extractors);
        const auto report = evaluate(eval_req, config);
        std::ofstream file(eval_out, std::ios::binary);
        file << report.dump(2) << '\n';
        if (!file) throw DomainError("cannot write " + eval_out);
        for (const auto& r : report.at("records"))
          std::cout << r.at("metric").get<std::string>()
                    << (r.at("variant").get<std::string>().empty() ? "" : "/" + r.at("variant").get<std::string>())
                    << " = " << r.at("value").get<double>() << '\n';
      });
    };
  });

  // export
  std::string export_in, export_out, export_format = "json";
  auto* export_cmd = app.add_subcommand("export", "Convert a motion file to json, csv or bvh");
  export_cmd->add_option("--in", export_in, "Motion file")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--format", export_format, "json, csv or bvh")->required();
  export_cmd->add_option("--out", export_out, "Output file (default: input with the format's extension)");
  export_cmd->callback([&] {
    action = [&] {
      return run("export", [&] {
        const auto path = export_motion_file(export_in, export_format_from_string(export_format), export_out);
        std::cout << "wrote " << path.string() << '\n';
      });
    };
  });

  CLI11_PARSE(app, argc, argv);
  return action ? action() : 1;
}
