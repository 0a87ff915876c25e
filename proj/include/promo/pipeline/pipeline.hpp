#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "promo/eval/metrics.hpp"
#include "promo/pipeline/checkpoint.hpp"
#include "promo/pipeline/config.hpp"
#include "promo/pipeline/dataset.hpp"

namespace promo::pipeline {

enum class ModelKind { posture, go, encoders, extractors };

std::string_view to_string(ModelKind k);
ModelKind model_kind_from_string(std::string_view s);

struct TrainOutcome {
  Checkpoint checkpoint;
  std::vector<double> loss_history;
};

/// Trains one model on a dataset file (poses for posture and encoders, motions
/// for go and extractors) with the widths and learning rates of `config`.
TrainOutcome train_model(ModelKind kind, const std::filesystem::path& data, int epochs, std::uint64_t seed,
                         const PipelineConfig& config);

/// The three models generation needs, with the SHA-256 of each checkpoint file.
struct GenerationModels {
  std::unique_ptr<posture::PostureDenoiser> posture;
  std::unique_ptr<posture::RetrievalModel> encoders;
  std::unique_ptr<go::GoDenoiser> go;
  std::map<std::string, std::string> checkpoint_sha256;
};

/// Throws StageError("load", ...) naming the missing or mismatched checkpoint.
GenerationModels load_generation_models(const PipelineConfig& config);

struct PipelineResult {
  MotionRecord record;                    // generated motion and the plan it follows
  std::vector<motion::Vec3> root_positions;  // decoded world root per frame, starting at the origin
  nlohmann::json provenance;
};

/// plan (stub or live) -> L posture candidates per script -> transition and
/// emission matrices -> Viterbi path -> go generation -> world decoding.
/// Candidates are sampled from derive_seed(seed, {1}) and the motion from
/// derive_seed(seed, {2}). Any failure is rethrown as a StageError tagged
/// plan, candidates, planning, go or decode.
PipelineResult run_pipeline(const std::string& prompt, const PipelineConfig& config, const GenerationModels& models,
                            std::uint64_t seed);

/// Writes the motion file to `out` (one JSON line: the record plus meta and
/// the decoded root trajectory) and the provenance to `out` + ".provenance.json".
void write_pipeline_result(const PipelineResult& result, const std::filesystem::path& out);

inline const std::vector<std::string> kAllMetrics = {"ape", "ave", "smoothness", "fid", "r_precision",
                                                     "mm_distance"};

struct EvaluateRequest {
  std::filesystem::path generated;
  std::filesystem::path reference;
  std::vector<std::string> metrics = kAllMetrics;
  std::filesystem::path extractors;  // needed by fid, r_precision and mm_distance
};

/// Metric report: report_json of the records plus the inputs' hashes, the
/// seed and the config hash. APE and AVE pair generated[i] with reference[i].
nlohmann::json evaluate(const EvaluateRequest& request, const PipelineConfig& config);

}  // namespace promo::pipeline
