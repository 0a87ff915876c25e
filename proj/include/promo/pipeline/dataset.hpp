#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "promo/eval/features.hpp"
#include "promo/posture/denoiser.hpp"

namespace promo::pipeline {

/// Provenance line written first in every JSONL file: {"meta": {...}}.
struct DatasetMeta {
  std::string kind;  // "poses", "motions" or "motion"
  std::uint64_t seed = 0;
  std::string config_hash;
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
  static DatasetMeta from_json(const nlohmann::json& j);
};

/// A motion with the plan that describes it. Files may carry the decoded root
/// trajectory as well; readers ignore it.
struct MotionRecord {
  motion::MotionSequence motion;
  eval::MotionText plan;
};

/// {"pose":[132 floats],"script":{...}}. Floats use their shortest round-trip
/// decimal form.
std::string pose_record_json(const posture::PosturePair& pair);
posture::PosturePair parse_pose_record(const nlohmann::json& row);

/// {"fps":..,"frames":[[135 floats] x 64],"plan":[scripts]} plus optional
/// extra members (sorted by key after the standard ones).
std::string motion_record_json(const MotionRecord& record, const nlohmann::json& extra = nlohmann::json::object());
/// Throws DomainError unless the record has exactly 64 frames of 135 values,
/// a valid sequence and valid scripts.
MotionRecord parse_motion_record(const nlohmann::json& row);

void write_pose_dataset(const std::filesystem::path& path, const std::vector<posture::PosturePair>& pairs,
                        const DatasetMeta& meta);
std::vector<posture::PosturePair> read_pose_dataset(const std::filesystem::path& path, DatasetMeta* meta = nullptr);

void write_motion_dataset(const std::filesystem::path& path, const std::vector<MotionRecord>& records,
                          const DatasetMeta& meta);
/// Reads a motion dataset or a single motion file: every line holding frames
/// is a record, meta lines are skipped.
std::vector<MotionRecord> read_motion_dataset(const std::filesystem::path& path, DatasetMeta* meta = nullptr);

/// Writes the generated dataset files of the synth-data command.
void write_synth_pose_dataset(const std::filesystem::path& path, std::size_t n, std::uint64_t seed,
                              const std::string& config_hash);
void write_synth_motion_dataset(const std::filesystem::path& path, std::size_t n, std::uint64_t seed,
                                const std::string& config_hash, std::size_t keyposes = 4);

}  // namespace promo::pipeline
