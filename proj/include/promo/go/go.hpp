#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "json.hpp"
#include "promo/diffusion/diffusion.hpp"
#include "promo/motion/motion.hpp"
#include "promo/nn/layers.hpp"
#include "promo/nn/optim.hpp"

namespace promo::go {

inline constexpr std::size_t kMaxKeyposes = 16;

/// Local poses (root orientation + body) that anchor a motion; no translation.
struct KeyposeCondition {
  std::vector<motion::PoseVector> poses;

  /// Throws DomainError unless 1 <= F <= 16 and every pose is valid.
  void validate() const;
};

/// Frame assigned to keypose k of F: floor((k + 1/2) * frames / F).
std::vector<int> keyframe_indices(std::size_t F, std::size_t frames = motion::kSequenceFrames);

KeyposeCondition extract_keyposes(const motion::MotionSequence& seq, std::size_t F);

/// Per-channel standardization of the 135-dim frame features.
struct FeatureStats {
  std::array<float, motion::kFrameDim> mean{};
  std::array<float, motion::kFrameDim> stddev{};

  static FeatureStats identity();
  /// Channel mean and standard deviation over every frame; deviations are
  /// floored at min_stddev so near-constant channels are not amplified.
  static FeatureStats fit(const std::vector<motion::MotionSequence>& motions, float min_stddev = 1e-2f);

  nlohmann::json to_json() const;
  static FeatureStats from_json(const nlohmann::json& j);
};

struct GoDenoiserConfig {
  std::size_t latent = 64;
  int heads = 4;
  int layers = 2;
  std::size_t ffn = 128;
  double dropout = 0.1;
  int diffusion_steps = 100;
  diffusion::ScheduleKind schedule = diffusion::ScheduleKind::cosine;

  void validate() const;
  nlohmann::json to_json() const;
  static GoDenoiserConfig from_json(const nlohmann::json& j);
};

/// Pre-LN transformer encoder over [keypose tokens, time token, 64 frame
/// tokens] per sample. Keypose tokens are projected 132 -> latent and carry a
/// learned condition offset plus the sinusoidal position of their keyframe;
/// frame tokens carry the sinusoidal position of their frame. A null
/// condition simply has no keypose tokens. Inputs and outputs are
/// standardized features of shape [batch, 64, 135].
class GoDenoiser final : public diffusion::Denoiser<KeyposeCondition>,
                         public diffusion::TrainableDenoiser<float, KeyposeCondition> {
 public:
  GoDenoiser(const GoDenoiserConfig& config, const FeatureStats& stats, std::uint64_t seed);

  const GoDenoiserConfig& config() const { return config_; }
  const FeatureStats& stats() const { return stats_; }
  const diffusion::DiffusionSchedule& schedule() const { return schedule_; }

  nn::Var forward(nn::Tape<float>& tape, nn::Var x_t, const std::vector<int>& steps,
                  const std::vector<const KeyposeCondition*>& conditions) const override;
  nn::ParameterStore<float>& parameters() override { return store_; }
  const nn::ParameterStore<float>& parameters() const { return store_; }
  std::unique_ptr<Session> session(const std::vector<const KeyposeCondition*>& conditions) const override;

  /// Standardized [64, 135] tensor of a sequence and its inverse.
  nn::Tensor<float> normalize(const motion::MotionSequence& seq) const;
  motion::MotionSequence denormalize(const float* features, int fps) const;

 private:
  class DirectSession;
  struct Layer {
    nn::LayerNorm<float> ln_attn, ln_ff;
    nn::MultiHeadAttention<float> attn;
    nn::FeedForward<float> ff;
  };

  GoDenoiserConfig config_;
  FeatureStats stats_;
  diffusion::DiffusionSchedule schedule_;
  nn::ParameterStore<float> store_;
  nn::Linear<float> frame_in_, keypose_in_, time_in_, time_out_, output_;
  nn::Parameter<float>* condition_offset_ = nullptr;
  std::vector<Layer> layers_;
  nn::LayerNorm<float> ln_out_;
};

struct GoTrainConfig {
  int epochs = 300;
  std::size_t batch = 64;
  double condition_dropout = 0.1;
  std::size_t min_keyposes = 1;
  std::size_t max_keyposes = 8;
  nn::AdamWConfig optimizer{.lr = 1e-3};
};

struct GoTrainResult {
  std::unique_ptr<GoDenoiser> model;
  std::vector<double> loss_history;
};

/// Each sample of each step draws its keypose count uniformly from
/// [min_keyposes, max_keyposes] and conditions on the evenly spaced frames.
/// Feature statistics are fitted on the dataset.
GoTrainResult train_go_diffuser(const std::vector<motion::MotionSequence>& motions, const GoDenoiserConfig& model,
                                const GoTrainConfig& train, std::uint64_t seed);

/// Reverse diffusion of one 64-frame sequence; frame-0 planar velocity is zeroed.
motion::MotionSequence generate_motion(const GoDenoiser& denoiser, const KeyposeCondition& keyposes, double w,
                                       std::uint64_t seed, int fps = 20);

/// Batched form: sequence b draws its noise from seeds[b], as generate_motion
/// does. Results match the unbatched call up to float rounding, and are
/// bit-identical across reruns of the same batch.
std::vector<motion::MotionSequence> generate_motions(const GoDenoiser& denoiser,
                                                     const std::vector<KeyposeCondition>& keyposes, double w,
                                                     const std::vector<std::uint64_t>& seeds, int fps = 20);

/// Non-learned baseline: per-joint slerp between consecutive keyposes placed at
/// keyframe_indices, constant before the first and after the last, zero planar
/// velocity, root height interpolated from the grounded height of each keypose.
motion::MotionSequence interpolate_baseline(const KeyposeCondition& keyposes,
                                            std::size_t frame_count = motion::kSequenceFrames, int fps = 20);

}  // namespace promo::go
