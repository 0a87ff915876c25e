#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "json.hpp"
#include "promo/nn/layers.hpp"
#include "promo/nn/optim.hpp"
#include "promo/posture/denoiser.hpp"

namespace promo::posture {

struct RetrievalConfig {
  std::size_t token_embedding = 64;
  std::size_t gru_hidden = 64;
  std::size_t pose_hidden = 256;
  std::size_t embedding = 128;  // d_e
  std::size_t max_tokens = 128;
  double initial_temperature = 0.07;

  void validate() const;
  nlohmann::json to_json() const;
  static RetrievalConfig from_json(const nlohmann::json& j);
};

/// Script encoder: token embedding, one bidirectional GRU layer, mean pooling
/// over positions, linear head, L2 normalization.
class TextEncoderPhi {
 public:
  TextEncoderPhi() = default;
  TextEncoderPhi(nn::ParameterStore<float>& store, const RetrievalConfig& config, Rng& rng);

  nn::Var operator()(nn::Tape<float>& tape, const std::vector<std::vector<int>>& tokens) const;
  std::size_t max_tokens() const { return max_tokens_; }

 private:
  std::size_t max_tokens_ = 0;
  nn::Embedding<float> embed_;
  nn::BiGRU<float> gru_;
  nn::Linear<float> head_;
};

/// Pose encoder: 132 -> hidden -> hidden -> d_e with GELU, then L2 normalization.
class PoseEncoderTheta {
 public:
  PoseEncoderTheta() = default;
  PoseEncoderTheta(nn::ParameterStore<float>& store, const RetrievalConfig& config, Rng& rng);

  nn::Var operator()(nn::Tape<float>& tape, nn::Var poses) const;

 private:
  nn::Linear<float> l1_, l2_, l3_;
};

/// Both encoders plus the learnable log inverse temperature, sharing one store.
class RetrievalModel {
 public:
  RetrievalModel(const RetrievalConfig& config, std::uint64_t seed);

  const RetrievalConfig& config() const { return config_; }
  nn::ParameterStore<float>& parameters() { return store_; }
  const nn::ParameterStore<float>& parameters() const { return store_; }
  const TextEncoderPhi& phi() const { return phi_; }
  const PoseEncoderTheta& theta() const { return theta_; }
  nn::Parameter<float>& log_scale() { return *log_scale_; }
  double temperature() const;

  /// Unit-norm embeddings, one row per input.
  nn::Tensor<float> encode_scripts(const std::vector<script::PostureScript>& scripts) const;
  nn::Tensor<float> encode_poses(const std::vector<motion::PoseVector>& poses) const;

 private:
  RetrievalConfig config_;
  nn::ParameterStore<float> store_;
  TextEncoderPhi phi_;
  PoseEncoderTheta theta_;
  nn::Parameter<float>* log_scale_ = nullptr;
};

nn::Tensor<float> pose_matrix(const std::vector<motion::PoseVector>& poses);

struct RetrievalTrainConfig {
  int epochs = 30;
  std::size_t batch = 64;
  nn::AdamWConfig optimizer{.lr = 1e-3};
};

struct RetrievalTrainResult {
  std::unique_ptr<RetrievalModel> model;
  std::vector<double> loss_history;
};

/// In-batch contrastive training with the symmetric cross-entropy loss over
/// S_ab = phi(t_a).theta(p_b) / tau. Every batch is full; the remainder of an
/// epoch's shuffle is dropped.
RetrievalTrainResult train_retrieval_encoders(const std::vector<PosturePair>& dataset, const RetrievalConfig& model,
                                              const RetrievalTrainConfig& train, std::uint64_t seed);

/// Contrastive loss of one batch under the current weights.
double retrieval_loss(const RetrievalModel& model, const std::vector<PosturePair>& batch);

/// Mean top-1 text-to-pose accuracy over consecutive full batches of pairs.
double retrieval_top1(const RetrievalModel& model, const std::vector<PosturePair>& pairs, std::size_t batch);

}  // namespace promo::posture
