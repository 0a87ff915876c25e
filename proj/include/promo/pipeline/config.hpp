#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "promo/eval/features.hpp"
#include "promo/go/go.hpp"
#include "promo/planner/planner.hpp"
#include "promo/posture/encoders.hpp"

namespace promo::pipeline {

inline constexpr std::size_t kMaxCandidates = 256;

/// Everything a run depends on besides the prompt and the seed. Loaded from an
/// INI file whose sections mirror the members below; missing keys keep their
/// defaults and unknown keys are rejected.
struct PipelineConfig {
  posture::PostureDenoiserConfig posture;
  posture::RetrievalConfig encoders;
  go::GoDenoiserConfig go;
  eval::FeatureExtractorConfig extractors;

  double guidance = 2.0;  // w, shared by the posture and go samplers

  struct Training {
    std::size_t batch = 64;
    double posture_lr = 1e-3;
    double encoders_lr = 1e-3;
    double go_lr = 1e-3;
    double extractors_lr = 1e-3;
    std::size_t min_keyposes = 1;
    std::size_t max_keyposes = 8;
  } training;

  bool live_planner = false;
  planner::EndpointConfig endpoint;

  std::uint64_t seed = 0;

  std::size_t candidates = 16;  // L
  std::size_t frames = 4;       // F
  int fps = 20;
  unsigned threads = 1;

  struct Paths {
    std::filesystem::path posture = "checkpoints/posture.ckpt";
    std::filesystem::path encoders = "checkpoints/encoders.ckpt";
    std::filesystem::path go = "checkpoints/go.ckpt";
    std::filesystem::path extractors = "checkpoints/extractors.ckpt";
  } paths;

  /// Throws DomainError for non-finite w or L, F, fps or a model section out of range.
  void validate() const;
  /// Throws DomainError naming the first of the posture, encoder and go
  /// checkpoints that does not exist.
  void require_generation_checkpoints() const;

  nlohmann::json to_json() const;
  /// First 16 hex digits of the SHA-256 of to_json().dump().
  std::string hash() const;
};

/// Relative checkpoint paths are resolved against the directory of the file.
PipelineConfig load_config(const std::filesystem::path& ini_file);
PipelineConfig parse_config(const std::string& ini_text, const std::filesystem::path& base_dir = ".");

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);

}  // namespace promo::pipeline
