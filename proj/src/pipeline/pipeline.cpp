#include "promo/pipeline/pipeline.hpp"

#include <fstream>

#include "promo/planner/planner.hpp"
#include "promo/posture/planning.hpp"

namespace promo::pipeline {

namespace {

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

nn::AdamWConfig optimizer(double lr) {
  nn::AdamWConfig o;
  o.lr = lr;
  return o;
}

CheckpointInfo info_for(const std::filesystem::path& data, int epochs, std::uint64_t seed,
                        const PipelineConfig& config) {
  return {seed, epochs, config.hash(), file_sha256(data)};
}

}  // namespace

std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::posture: return "posture";
    case ModelKind::go: return "go";
    case ModelKind::encoders: return "encoders";
    case ModelKind::extractors: return "extractors";
  }
  return "posture";
}

ModelKind model_kind_from_string(std::string_view s) {
  for (auto k : {ModelKind::posture, ModelKind::go, ModelKind::encoders, ModelKind::extractors})
    if (to_string(k) == s) return k;
  throw DomainError("unknown model kind " + std::string(s) + " (expected posture, go, encoders or extractors)");
}

TrainOutcome train_model(ModelKind kind, const std::filesystem::path& data, int epochs, std::uint64_t seed,
                         const PipelineConfig& config) {
  if (epochs < 0) throw DomainError("train: epochs must be nonnegative");
  const auto info = info_for(data, epochs, seed, config);
  const auto& t = config.training;
  switch (kind) {
    case ModelKind::posture: {
      const auto pairs = read_pose_dataset(data);
      posture::PostureTrainConfig tc;
      tc.epochs = epochs;
      tc.batch = t.batch;
      tc.optimizer = optimizer(t.posture_lr);
      auto r = posture::train_posture_diffuser(pairs, config.posture, tc, seed);
      return {to_checkpoint(*r.model, info), std::move(r.loss_history)};
    }
    case ModelKind::encoders: {
      const auto pairs = read_pose_dataset(data);
      posture::RetrievalTrainConfig tc;
      tc.epochs = epochs;
      tc.batch = t.batch;
      tc.optimizer = optimizer(t.encoders_lr);
      auto r = posture::train_retrieval_encoders(pairs, config.encoders, tc, seed);
      return {to_checkpoint(*r.model, info), std::move(r.loss_history)};
    }
    case ModelKind::go: {
      std::vector<motion::MotionSequence> motions;
      for (auto& rec : read_motion_dataset(data)) motions.push_back(std::move(rec.motion));
      go::GoTrainConfig tc;
      tc.epochs = epochs;
      tc.batch = t.batch;
      tc.min_keyposes = t.min_keyposes;
      tc.max_keyposes = t.max_keyposes;
      tc.optimizer = optimizer(t.go_lr);
      auto r = go::train_go_diffuser(motions, config.go, tc, seed);
      return {to_checkpoint(*r.model, info), std::move(r.loss_history)};
    }
    case ModelKind::extractors: {
      std::vector<eval::MotionTextPair> pairs;
      for (auto& rec : read_motion_dataset(data)) pairs.push_back({std::move(rec.motion), std::move(rec.plan)});
      eval::FeatureTrainConfig tc;
      tc.epochs = epochs;
      tc.batch = t.batch;
      tc.optimizer = optimizer(t.extractors_lr);
      auto r = eval::train_feature_extractors(pairs, config.extractors, tc, seed);
      return {to_checkpoint(*r.model, info), std::move(r.loss_history)};
    }
  }
  throw DomainError("train: unknown model kind");
}

GenerationModels load_generation_models(const PipelineConfig& config) {
  return stage("load", [&] {
    config.require_generation_checkpoints();
    GenerationModels m;
    const auto posture_ckpt = Checkpoint::load(config.paths.posture);
    const auto encoders_ckpt = Checkpoint::load(config.paths.encoders);
    const auto go_ckpt = Checkpoint::load(config.paths.go);
    m.posture = load_posture(posture_ckpt, &config.posture);
    m.encoders = load_encoders(encoders_ckpt, &config.encoders);
    m.go = load_go(go_ckpt, &config.go);
    m.checkpoint_sha256 = {{"posture", sha256_hex(posture_ckpt.serialize())},
                           {"encoders", sha256_hex(encoders_ckpt.serialize())},
                           {"go", sha256_hex(go_ckpt.serialize())}};
    return m;
  });
}

PipelineResult run_pipeline(const std::string& prompt, const PipelineConfig& config, const GenerationModels& models,
                            std::uint64_t seed) {
  if (!models.posture || !models.encoders || !models.go) throw StageError("load", "generation models are not loaded");
  const planner::PlannerRequest request{prompt, config.frames, config.fps};
  const auto plan = stage("plan", [&] {
    return config.live_planner ? planner::plan_motion(request, config.endpoint) : planner::stub_plan(request);
  });

  const std::uint64_t candidate_seed = derive_seed(seed, {1});
  const std::uint64_t go_seed = derive_seed(seed, {2});
  const auto candidates = stage("candidates", [&] {
    return posture::generate_candidates(*models.posture, plan.scripts, config.candidates, config.guidance,
                                        candidate_seed, config.threads);
  });
  const auto path = stage("planning", [&] {
    return posture::viterbi_select(posture::build_matrices(candidates, *models.encoders));
  });
  const auto sequence = stage("go", [&] {
    const go::KeyposeCondition keyposes{posture::path_poses(candidates, path)};
    return go::generate_motion(*models.go, keyposes, config.guidance, go_seed, config.fps);
  });

  PipelineResult result;
  result.record = {sequence, plan.scripts};
  result.root_positions = stage("decode", [&] {
    return motion::decode_motion(sequence, Eigen::Vector2d::Zero()).root_position;
  });

  nlohmann::json scripts = nlohmann::json::array();
  for (const auto& s : plan.scripts) scripts.push_back(script::render_script(s));
  result.provenance = {{"prompt", prompt},
                       {"planner", config.live_planner ? "live" : "stub"},
                       {"raw_plan", plan.raw_text},
                       {"scripts", scripts},
                       {"path", path.indices},
                       {"path_log_prob", path.log_prob},
                       {"seeds", {{"master", seed}, {"candidates", candidate_seed}, {"go", go_seed}}},
                       {"candidates", config.candidates},
                       {"frames", config.frames},
                       {"fps", config.fps},
                       {"guidance", config.guidance},
                       {"config_hash", config.hash()},
                       {"checkpoints", models.checkpoint_sha256}};
  return result;
}

void write_pipeline_result(const PipelineResult& result, const std::filesystem::path& out) {
  nlohmann::json root = nlohmann::json::array();
  for (const auto& p : result.root_positions) root.push_back({p.x(), p.y(), p.z()});
  const nlohmann::json meta = {{"kind", "motion"},
                               {"seed", result.provenance.at("seeds").at("master")},
                               {"config_hash", result.provenance.at("config_hash")}};
  if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
  {
    std::ofstream file(out, std::ios::binary);
    file << motion_record_json(result.record, {{"meta", meta}, {"root", root}}) << '\n';
    if (!file) throw StageError("write", "cannot write " + out.string());
  }
  std::ofstream prov(out.string() + ".provenance.json", std::ios::binary);
  prov << result.provenance.dump(2) << '\n';
  if (!prov) throw StageError("write", "cannot write " + out.string() + ".provenance.json");
}

nlohmann::json evaluate(const EvaluateRequest& request, const PipelineConfig& config) {
  const auto generated = stage("read", [&] { return read_motion_dataset(request.generated); });
  const auto reference = stage("read", [&] { return read_motion_dataset(request.reference); });
  if (generated.empty() || reference.empty()) throw StageError("read", "empty motion set");

  std::vector<eval::JointTrajectory> gen_traj, ref_traj;
  for (const auto& r : generated) gen_traj.push_back(eval::JointTrajectory::from_motion(r.motion));
  for (const auto& r : reference) ref_traj.push_back(eval::JointTrajectory::from_motion(r.motion));

  std::unique_ptr<eval::FeatureExtractorPair> extractors;
  auto features = [&]() -> const eval::FeatureExtractorPair& {
    if (!extractors)
      extractors = stage("load", [&] {
        if (request.extractors.empty() || !std::filesystem::is_regular_file(request.extractors))
          throw DomainError("missing extractors checkpoint: " + request.extractors.string());
        return load_extractors(Checkpoint::load(request.extractors));
      });
    return *extractors;
  };
  auto motions_of = [](const std::vector<MotionRecord>& records) {
    std::vector<motion::MotionSequence> out;
    for (const auto& r : records) out.push_back(r.motion);
    return out;
  };
  auto texts_of = [](const std::vector<MotionRecord>& records) {
    std::vector<eval::MotionText> out;
    for (const auto& r : records) {
      if (r.plan.empty()) throw DomainError("text metrics need a plan for every generated motion");
      out.push_back(r.plan);
    }
    return out;
  };

  std::vector<eval::MetricRecord> records;
  const std::size_t n = generated.size();
  for (const auto& metric : request.metrics) {
    stage(metric.c_str(), [&] {
      if (metric == "ape" || metric == "ave") {
        if (gen_traj.size() != ref_traj.size())
          throw ShapeError("APE and AVE pair generated and reference motions; counts differ");
        for (auto v : eval::kAllPositionVariants) {
          const double value = metric == "ape" ? eval::ape(gen_traj, ref_traj, v) : eval::ave(gen_traj, ref_traj, v);
          records.push_back({metric, std::string(eval::to_string(v)), value, n});
        }
      } else if (metric == "smoothness") {
        for (const auto* set : {&gen_traj, &ref_traj}) {
          double sum = 0.0;
          for (const auto& t : *set) sum += eval::smoothness(t);
          records.push_back({metric, set == &gen_traj ? "generated" : "reference", sum / static_cast<double>(set->size()),
                             set->size()});
        }
      } else if (metric == "fid") {
        const auto& fx = features();
        const auto a = eval::GaussianStats::fit(fx.encode_motions(motions_of(generated)));
        const auto b = eval::GaussianStats::fit(fx.encode_motions(motions_of(reference)));
        records.push_back({metric, "", eval::fid(a, b), n});
      } else if (metric == "r_precision") {
        const auto& fx = features();
        const auto r = eval::r_precision(fx.encode_motions(motions_of(generated)), fx.encode_texts(texts_of(generated)),
                                         {1, 2, 3});
        for (std::size_t i = 0; i < r.ks.size(); ++i)
          records.push_back({metric, "R@" + std::to_string(r.ks[i]), r.recall[i], n});
        records.push_back({"median_rank", "", r.median_rank, n});
      } else if (metric == "mm_distance") {
        const auto& fx = features();
        records.push_back({metric, "",
                           eval::multimodal_distance(fx.encode_motions(motions_of(generated)),
                                                     fx.encode_texts(texts_of(generated))),
                           n});
      } else {
        throw DomainError("unknown metric " + metric);
      }
      return 0;
    });
  }

  auto report = eval::report_json(records);
  report["meta"] = {{"seed", config.seed},
                    {"config_hash", config.hash()},
                    {"generated_sha256", file_sha256(request.generated)},
                    {"reference_sha256", file_sha256(request.reference)}};
  if (extractors) report["meta"]["extractors_sha256"] = file_sha256(request.extractors);
  return report;
}

}  // namespace promo::pipeline
