#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "json.hpp"
#include "promo/diffusion/diffusion.hpp"
#include "promo/motion/motion.hpp"
#include "promo/nn/layers.hpp"
#include "promo/nn/optim.hpp"
#include "promo/script/script.hpp"

namespace promo::posture {

/// Token ids fed to the posture models: the rendered script with the glue
/// words (his, is, are, and) dropped, truncated to max_tokens.
struct ScriptCondition {
  std::vector<int> tokens;

  static ScriptCondition from_script(const script::PostureScript& s, std::size_t max_tokens);
};

std::vector<int> condition_tokens(const script::PostureScript& s, std::size_t max_tokens);

struct PostureDenoiserConfig {
  std::size_t latent = 64;
  int heads = 4;
  int layers = 3;
  int text_layers = 0;  // optional self-attention layers over the script tokens
  std::size_t ffn = 128;
  double dropout = 0.1;
  std::size_t max_tokens = 128;
  int diffusion_steps = 1000;
  diffusion::ScheduleKind schedule = diffusion::ScheduleKind::linear;

  void validate() const;
  nlohmann::json to_json() const;
  static PostureDenoiserConfig from_json(const nlohmann::json& j);
};

/// x0-predicting denoiser over 132-dim pose vectors. Each layer is a residual
/// block that mixes in the time embedding, then cross-attention from the pose
/// feature to the script token memory, then a feed-forward block.
class PostureDenoiser final : public diffusion::Denoiser<ScriptCondition>,
                              public diffusion::TrainableDenoiser<float, ScriptCondition> {
 public:
  PostureDenoiser(const PostureDenoiserConfig& config, std::uint64_t seed);

  const PostureDenoiserConfig& config() const { return config_; }
  const diffusion::DiffusionSchedule& schedule() const { return schedule_; }

  nn::Var forward(nn::Tape<float>& tape, nn::Var x_t, const std::vector<int>& steps,
                  const std::vector<const ScriptCondition*>& conditions) const override;
  nn::ParameterStore<float>& parameters() override { return store_; }
  const nn::ParameterStore<float>& parameters() const { return store_; }

  /// Keys and values of the script memory are projected once per session.
  std::unique_ptr<Session> session(const std::vector<const ScriptCondition*>& conditions) const override;

 private:
  class CachedSession;
  struct TextBlock {
    nn::LayerNorm<float> ln_attn, ln_ff;
    nn::MultiHeadAttention<float> attn;
    nn::FeedForward<float> ff;
  };
  struct Block {
    nn::LayerNorm<float> ln_res, ln_attn, ln_ff;
    nn::Linear<float> time_proj;
    nn::FeedForward<float> res_ff, ff;
    nn::MultiHeadAttention<float> attn;
  };
  using CrossAttend = std::function<nn::Var(nn::Tape<float>&, int layer, nn::Var query)>;

  nn::Var memory(nn::Tape<float>& tape, const std::vector<const ScriptCondition*>& conditions,
                 std::vector<int>& key_offsets) const;
  nn::Var pose_path(nn::Tape<float>& tape, nn::Var x_t, const std::vector<int>& steps,
                    const CrossAttend& cross) const;

  PostureDenoiserConfig config_;
  diffusion::DiffusionSchedule schedule_;
  nn::ParameterStore<float> store_;
  nn::Linear<float> input_, time_in_, time_out_, output_;
  nn::LayerNorm<float> ln_out_, ln_memory_;
  nn::Embedding<float> tokens_;
  nn::Parameter<float>* token_table_ = nullptr;
  nn::Parameter<float>* null_token_ = nullptr;
  std::vector<TextBlock> text_blocks_;
  std::vector<Block> blocks_;
};

struct PosturePair {
  motion::PoseVector pose;
  script::PostureScript script;
};

struct PostureTrainConfig {
  int epochs = 200;
  std::size_t batch = 64;
  double condition_dropout = 0.1;
  nn::AdamWConfig optimizer{.lr = 1e-3};
};

struct PostureTrainResult {
  std::unique_ptr<PostureDenoiser> model;
  std::vector<double> loss_history;  // mean loss per epoch
};

/// Shuffled mini-batches of diffusion::train_step followed by AdamW. The last
/// batch of an epoch may be smaller.
PostureTrainResult train_posture_diffuser(const std::vector<PosturePair>& dataset, const PostureDenoiserConfig& model,
                                          const PostureTrainConfig& train, std::uint64_t seed);

/// Continues training an existing model in place; returns the per-epoch losses.
std::vector<double> train_posture_diffuser(PostureDenoiser& model, const std::vector<PosturePair>& dataset,
                                           const PostureTrainConfig& train, std::uint64_t seed);

/// Index permutation of 0..n-1 by Fisher-Yates with the library Rng.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

}  // namespace promo::posture
