#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "promo/eval/features.hpp"
#include "promo/go/go.hpp"
#include "promo/posture/encoders.hpp"

namespace promo::pipeline {

inline constexpr int kCheckpointVersion = 1;

/// Model kinds a checkpoint can hold.
inline constexpr std::string_view kPostureKind = "posture";
inline constexpr std::string_view kEncodersKind = "encoders";
inline constexpr std::string_view kGoKind = "go";
inline constexpr std::string_view kExtractorsKind = "extractors";

struct ParameterBlock {
  std::string name;
  std::vector<float> values;

  bool operator==(const ParameterBlock&) const = default;
};

/// Byte layout: the magic "PROMOCKP", a little-endian u64 header length, the
/// JSON header, a u64 block count, then per block a u32 name length, the name
/// bytes, a u64 element count and the elements as little-endian f32.
///
/// The header holds format version, kind, model config, parameter layout
/// (name and shape of every block, in order), training seed, epoch count and
/// any kind-specific extras such as feature statistics.
struct Checkpoint {
  nlohmann::json header;
  std::vector<ParameterBlock> blocks;

  std::string kind() const { return header.at("kind").get<std::string>(); }

  std::string serialize() const;
  /// Throws DomainError on a bad magic, truncation, trailing bytes, duplicate
  /// names or a layout that disagrees with the blocks.
  static Checkpoint deserialize(std::string_view bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  bool operator==(const Checkpoint&) const = default;
};

/// Header fields every training run records next to the weights.
struct CheckpointInfo {
  std::uint64_t seed = 0;
  int epochs = 0;
  std::string config_hash;
  std::string data_sha256;
};

Checkpoint make_checkpoint(std::string_view kind, const nlohmann::json& config, const nn::ParameterStore<float>& store,
                           const CheckpointInfo& info, const nlohmann::json& extras = nlohmann::json::object());

/// Copies every block into the store after checking, for all blocks first,
/// that names and shapes match the store exactly.
void load_parameters(nn::ParameterStore<float>& store, const Checkpoint& ckpt);

Checkpoint to_checkpoint(const posture::PostureDenoiser& model, const CheckpointInfo& info);
Checkpoint to_checkpoint(const posture::RetrievalModel& model, const CheckpointInfo& info);
Checkpoint to_checkpoint(const go::GoDenoiser& model, const CheckpointInfo& info);
Checkpoint to_checkpoint(const eval::FeatureExtractorPair& model, const CheckpointInfo& info);

/// Rebuilds a model from a checkpoint of the matching kind. When `expected` is
/// given, its dimensions must equal the stored config or DomainError is thrown
/// before any weights are allocated.
std::unique_ptr<posture::PostureDenoiser> load_posture(const Checkpoint& ckpt,
                                                       const posture::PostureDenoiserConfig* expected = nullptr);
std::unique_ptr<posture::RetrievalModel> load_encoders(const Checkpoint& ckpt,
                                                       const posture::RetrievalConfig* expected = nullptr);
std::unique_ptr<go::GoDenoiser> load_go(const Checkpoint& ckpt, const go::GoDenoiserConfig* expected = nullptr);
std::unique_ptr<eval::FeatureExtractorPair> load_extractors(const Checkpoint& ckpt,
                                                            const eval::FeatureExtractorConfig* expected = nullptr);

CheckpointInfo checkpoint_info(const Checkpoint& ckpt);

}  // namespace promo::pipeline
