#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "json.hpp"
#include "promo/go/go.hpp"
#include "promo/posture/encoders.hpp"

namespace promo::eval {

/// The textual side of a motion: the scripts of its plan, in keyframe order.
using MotionText = std::vector<script::PostureScript>;

struct MotionTextPair {
  motion::MotionSequence motion;
  MotionText text;
};

struct FeatureExtractorConfig {
  std::size_t token_embedding = 64;
  std::size_t gru_hidden = 64;
  std::size_t motion_hidden = 128;
  std::size_t feature_dim = 64;  // d_f
  std::size_t max_tokens = 256;
  double initial_temperature = 0.07;

  void validate() const;
  nlohmann::json to_json() const;
  static FeatureExtractorConfig from_json(const nlohmann::json& j);
};

/// Token ids of a plan: the condition tokens of each script concatenated, then
/// truncated to max_tokens.
std::vector<int> text_tokens(const MotionText& text, std::size_t max_tokens);

/// Contrastively trained motion and text encoders with unit-norm outputs.
/// Motion side: standardized frames -> linear + sinusoidal frame position ->
/// GELU -> linear -> GELU -> temporal mean -> linear. Text side: the script
/// encoder of the posture retrieval model over text_tokens.
class FeatureExtractorPair {
 public:
  FeatureExtractorPair(const FeatureExtractorConfig& config, const go::FeatureStats& stats, std::uint64_t seed);

  const FeatureExtractorConfig& config() const { return config_; }
  const go::FeatureStats& stats() const { return stats_; }
  nn::ParameterStore<float>& parameters() { return store_; }
  const nn::ParameterStore<float>& parameters() const { return store_; }
  nn::Parameter<float>& log_scale() { return *log_scale_; }

  nn::Var motion_features(nn::Tape<float>& tape, const std::vector<const motion::MotionSequence*>& motions) const;
  nn::Var text_features(nn::Tape<float>& tape, const std::vector<const MotionText*>& texts) const;

  nn::Tensor<float> encode_motions(const std::vector<motion::MotionSequence>& motions) const;
  nn::Tensor<float> encode_texts(const std::vector<MotionText>& texts) const;

 private:
  FeatureExtractorConfig config_;
  go::FeatureStats stats_;
  nn::ParameterStore<float> store_;
  posture::TextEncoderPhi text_;
  nn::Linear<float> m1_, m2_, m3_;
  nn::Parameter<float>* log_scale_ = nullptr;
};

struct FeatureTrainConfig {
  int epochs = 30;
  std::size_t batch = 64;
  nn::AdamWConfig optimizer{.lr = 1e-3};
};

struct FeatureTrainResult {
  std::unique_ptr<FeatureExtractorPair> model;
  std::vector<double> loss_history;
};

/// Same recipe as the posture retrieval encoders: full shuffled batches,
/// symmetric in-batch cross-entropy with a learned temperature. Feature
/// statistics are fitted on the dataset's motions.
FeatureTrainResult train_feature_extractors(const std::vector<MotionTextPair>& dataset,
                                            const FeatureExtractorConfig& config, const FeatureTrainConfig& train,
                                            std::uint64_t seed);

/// Mean top-1 text-to-motion accuracy over consecutive full batches.
double feature_top1(const FeatureExtractorPair& model, const std::vector<MotionTextPair>& pairs, std::size_t batch);

/// Indices of rows of a whose largest cosine similarity to any row of b does
/// not exceed alpha.
std::vector<std::size_t> similarity_filter(const nn::Tensor<float>& a, const nn::Tensor<float>& b, double alpha = 0.45);
std::vector<std::size_t> similarity_filter(const std::vector<MotionText>& texts_a, const std::vector<MotionText>& texts_b,
                                           const FeatureExtractorPair& encoder, double alpha = 0.45);

}  // namespace promo::eval
