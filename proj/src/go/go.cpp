#include "promo/go/go.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Geometry>

namespace promo::go {

using motion::kFrameDim;
using motion::kPoseDim;
using motion::kSequenceFrames;
using motion::MotionSequence;
using motion::PoseVector;
using nn::Tape;
using nn::Tensor;
using nn::Var;

void KeyposeCondition::validate() const {
  if (poses.empty() || poses.size() > kMaxKeyposes)
    throw DomainError("keypose count must lie in [1, 16], got " + std::to_string(poses.size()));
  for (const auto& p : poses) p.validate();
}

std::vector<int> keyframe_indices(std::size_t F, std::size_t frames) {
  if (F == 0 || F > frames) throw DomainError("keyframe count must lie in [1, frames]");
  std::vector<int> out(F);
  for (std::size_t k = 0; k < F; ++k)
    out[k] = static_cast<int>(std::floor((static_cast<double>(k) + 0.5) * static_cast<double>(frames) / static_cast<double>(F)));
  return out;
}

KeyposeCondition extract_keyposes(const MotionSequence& seq, std::size_t F) {
  seq.validate();
  KeyposeCondition c;
  for (int f : keyframe_indices(F, seq.frames.size())) c.poses.push_back(seq.pose(static_cast<std::size_t>(f)));
  return c;
}

FeatureStats FeatureStats::identity() {
  FeatureStats s;
  s.mean.fill(0.0f);
  s.stddev.fill(1.0f);
  return s;
}

FeatureStats FeatureStats::fit(const std::vector<MotionSequence>& motions, float min_stddev) {
  std::array<double, kFrameDim> sum{}, sq{};
  std::size_t n = 0;
  for (const auto& m : motions)
    for (const auto& f : m.frames) {
      for (std::size_t c = 0; c < kFrameDim; ++c) sum[c] += f[c];
      ++n;
    }
  if (n == 0) throw DomainError("feature statistics need at least one frame");
  FeatureStats s;
  for (std::size_t c = 0; c < kFrameDim; ++c) s.mean[c] = static_cast<float>(sum[c] / static_cast<double>(n));
  for (const auto& m : motions)
    for (const auto& f : m.frames)
      for (std::size_t c = 0; c < kFrameDim; ++c) sq[c] += (f[c] - s.mean[c]) * static_cast<double>(f[c] - s.mean[c]);
  for (std::size_t c = 0; c < kFrameDim; ++c)
    s.stddev[c] = std::max(min_stddev, static_cast<float>(std::sqrt(sq[c] / static_cast<double>(n))));
  return s;
}

nlohmann::json FeatureStats::to_json() const { return {{"mean", mean}, {"stddev", stddev}}; }

FeatureStats FeatureStats::from_json(const nlohmann::json& j) {
  FeatureStats s;
  s.mean = j.at("mean").get<std::array<float, kFrameDim>>();
  s.stddev = j.at("stddev").get<std::array<float, kFrameDim>>();
  for (float v : s.stddev)
    if (!(v > 0.0f)) throw DomainError("feature standard deviations must be positive");
  return s;
}

void GoDenoiserConfig::validate() const {
  if (latent == 0 || latent % 2 != 0) throw DomainError("go latent dimension must be even and positive");
  if (heads < 1 || latent % static_cast<std::size_t>(heads) != 0)
    throw DomainError("go latent dimension must be divisible by the head count");
  if (layers < 1 || ffn == 0) throw DomainError("go layer count and ffn width must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("go dropout must lie in [0, 1)");
  if (diffusion_steps < 1) throw DomainError("go diffusion steps must be positive");
}

nlohmann::json GoDenoiserConfig::to_json() const {
  return {{"latent", latent}, {"heads", heads},     {"layers", layers},
          {"ffn", ffn},       {"dropout", dropout}, {"diffusion_steps", diffusion_steps},
          {"schedule", diffusion::to_string(schedule)}};
}

GoDenoiserConfig GoDenoiserConfig::from_json(const nlohmann::json& j) {
  GoDenoiserConfig c;
  c.latent = j.at("latent").get<std::size_t>();
  c.heads = j.at("heads").get<int>();
  c.layers = j.at("layers").get<int>();
  c.ffn = j.at("ffn").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.diffusion_steps = j.at("diffusion_steps").get<int>();
  c.schedule = diffusion::schedule_kind_from_string(j.at("schedule").get<std::string>());
  c.validate();
  return c;
}

GoDenoiser::GoDenoiser(const GoDenoiserConfig& config, const FeatureStats& stats, std::uint64_t seed)
    : config_((config.validate(), config)),
      stats_(stats),
      schedule_(diffusion::make_schedule(config.schedule, config.diffusion_steps)) {
  Rng rng(seed);
  const std::size_t d = config_.latent;
  frame_in_ = nn::Linear<float>(store_, "go.frame_in", kFrameDim, d, rng);
  keypose_in_ = nn::Linear<float>(store_, "go.keypose_in", kPoseDim, d, rng);
  condition_offset_ = &store_.add("go.condition_offset", nn::init_normal<float>({d}, 0.02, rng));
  time_in_ = nn::Linear<float>(store_, "go.time.in", d, d, rng);
  time_out_ = nn::Linear<float>(store_, "go.time.out", d, d, rng);
  for (int l = 0; l < config_.layers; ++l) {
    const std::string n = "go.layer" + std::to_string(l);
    Layer layer;
    layer.ln_attn = nn::LayerNorm<float>(store_, n + ".ln_attn", d);
    layer.attn = nn::MultiHeadAttention<float>(store_, n + ".attn", d, config_.heads, rng);
    layer.ln_ff = nn::LayerNorm<float>(store_, n + ".ln_ff", d);
    layer.ff = nn::FeedForward<float>(store_, n + ".ff", d, config_.ffn, rng, static_cast<float>(config_.dropout));
    layers_.push_back(layer);
  }
  ln_out_ = nn::LayerNorm<float>(store_, "go.ln_out", d);
  output_ = nn::Linear<float>(store_, "go.output", d, kFrameDim, rng);
}

Var GoDenoiser::forward(Tape<float>& tape, Var x_t, const std::vector<int>& steps,
                        const std::vector<const KeyposeCondition*>& conditions) const {
  const Tensor<float>& xv = tape.value(x_t);
  const std::size_t B = conditions.size();
  if (xv.rank() != 3 || xv.shape()[0] != B || xv.shape()[1] != kSequenceFrames || xv.shape()[2] != kFrameDim)
    throw ShapeError("go denoiser expects [batch, 64, 135] input with one condition per sample");
  if (steps.size() != B) throw ShapeError("go denoiser: one timestep per sample required");
  const std::size_t d = config_.latent;
  const std::size_t frame_rows = B * kSequenceFrames;

  // Frame tokens, with positions 0..63 repeated per sample.
  std::vector<double> frame_pos(frame_rows);
  for (std::size_t r = 0; r < frame_rows; ++r) frame_pos[r] = static_cast<double>(r % kSequenceFrames);
  Var frames = tape.add(frame_in_(tape, tape.reshape(x_t, {frame_rows, kFrameDim})),
                        tape.constant(nn::sinusoidal_table<float>(frame_pos, d)));

  // Keypose tokens of every non-null condition.
  std::vector<double> key_pos;
  std::vector<std::size_t> key_count(B, 0);
  Tensor<float> key_values;
  std::vector<float> flat;
  for (std::size_t b = 0; b < B; ++b) {
    if (!conditions[b]) continue;
    const auto& poses = conditions[b]->poses;
    if (poses.empty() || poses.size() > kMaxKeyposes) throw DomainError("keypose count must lie in [1, 16]");
    const auto idx = keyframe_indices(poses.size());
    for (std::size_t k = 0; k < poses.size(); ++k) {
      flat.insert(flat.end(), poses[k].values.begin(), poses[k].values.end());
      key_pos.push_back(static_cast<double>(idx[k]));
    }
    key_count[b] = poses.size();
  }
  const std::size_t key_rows = key_pos.size();

  std::vector<double> t(steps.begin(), steps.end());
  Var times = time_out_(tape, tape.gelu(time_in_(tape, tape.constant(nn::sinusoidal_table<float>(t, d)))));

  std::vector<Var> groups = {frames, times};
  if (key_rows > 0) {
    Var keys = tape.add_row(keypose_in_(tape, tape.constant(Tensor<float>({key_rows, kPoseDim}, flat))),
                            tape.param(*condition_offset_));
    groups.push_back(tape.add(keys, tape.constant(nn::sinusoidal_table<float>(key_pos, d))));
  }
  Var all = tape.concat_rows(groups);

  // Per-sample order: keyposes, time, frames.
  std::vector<int> order, offsets{0}, frame_out;
  std::size_t key_cursor = 0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t k = 0; k < key_count[b]; ++k) order.push_back(static_cast<int>(frame_rows + B + key_cursor++));
    order.push_back(static_cast<int>(frame_rows + b));
    for (std::size_t f = 0; f < kSequenceFrames; ++f) {
      frame_out.push_back(static_cast<int>(order.size()));
      order.push_back(static_cast<int>(b * kSequenceFrames + f));
    }
    offsets.push_back(static_cast<int>(order.size()));
  }
  Var h = tape.gather_rows(all, std::move(order));
  const auto layout = nn::AttentionLayout::self(offsets);
  for (const Layer& l : layers_) {
    Var n = l.ln_attn(tape, h);
    h = tape.add(h, l.attn(tape, n, n, layout));
    h = tape.add(h, l.ff(tape, l.ln_ff(tape, h)));
  }
  Var out = output_(tape, ln_out_(tape, tape.gather_rows(h, std::move(frame_out))));
  return tape.reshape(out, {B, kSequenceFrames, kFrameDim});
}

class GoDenoiser::DirectSession final : public Session {
 public:
  DirectSession(const GoDenoiser& model, std::vector<const KeyposeCondition*> conditions)
      : model_(model), conditions_(std::move(conditions)) {}

  Tensor<float> predict(const Tensor<float>& x_t, int t) override {
    model_.schedule_.check_step(t);
    Tape<float> tape(Tape<float>::Options{.train = false, .record = false});
    Var out = model_.forward(tape, tape.constant_view(x_t), std::vector<int>(conditions_.size(), t), conditions_);
    return tape.value(out);
  }

 private:
  const GoDenoiser& model_;
  std::vector<const KeyposeCondition*> conditions_;
};

std::unique_ptr<diffusion::Denoiser<KeyposeCondition>::Session> GoDenoiser::session(
    const std::vector<const KeyposeCondition*>& conditions) const {
  if (conditions.empty()) throw ShapeError("go session: empty batch");
  for (const auto* c : conditions)
    if (c) c->validate();
  return std::make_unique<DirectSession>(*this, conditions);
}

Tensor<float> GoDenoiser::normalize(const MotionSequence& seq) const {
  seq.validate_model_length();
  Tensor<float> out({kSequenceFrames, kFrameDim});
  for (std::size_t f = 0; f < kSequenceFrames; ++f)
    for (std::size_t c = 0; c < kFrameDim; ++c) out.at(f, c) = (seq.frames[f][c] - stats_.mean[c]) / stats_.stddev[c];
  return out;
}

MotionSequence GoDenoiser::denormalize(const float* features, int fps) const {
  MotionSequence seq;
  seq.fps = fps;
  seq.frames.resize(kSequenceFrames);
  for (std::size_t f = 0; f < kSequenceFrames; ++f)
    for (std::size_t c = 0; c < kFrameDim; ++c)
      seq.frames[f][c] = features[f * kFrameDim + c] * stats_.stddev[c] + stats_.mean[c];
  return seq;
}

namespace {

std::vector<std::size_t> shuffle(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i - 1)))]);
  return idx;
}

}  // namespace

GoTrainResult train_go_diffuser(const std::vector<MotionSequence>& motions, const GoDenoiserConfig& config,
                                const GoTrainConfig& train, std::uint64_t seed) {
  if (motions.empty()) throw DomainError("go training needs a nonempty dataset");
  if (train.epochs < 0 || train.batch == 0) throw DomainError("go training: invalid epochs or batch size");
  if (train.min_keyposes < 1 || train.max_keyposes > kMaxKeyposes || train.min_keyposes > train.max_keyposes)
    throw DomainError("go training: keypose count range must lie in [1, 16]");
  for (const auto& m : motions) m.validate_model_length();

  GoTrainResult r;
  r.model = std::make_unique<GoDenoiser>(config, FeatureStats::fit(motions), derive_seed(seed, {0}));
  GoDenoiser& model = *r.model;
  std::vector<Tensor<float>> normalized;
  normalized.reserve(motions.size());
  for (const auto& m : motions) normalized.push_back(model.normalize(m));

  nn::AdamWState<float> opt(model.parameters(), train.optimizer);
  const std::size_t per = kSequenceFrames * kFrameDim;
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    Rng order_rng(derive_seed(seed, {1, static_cast<std::uint64_t>(epoch)}));
    const auto order = shuffle(motions.size(), order_rng);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < order.size(); start += train.batch, ++step) {
      const std::size_t n = std::min(train.batch, order.size() - start);
      Tensor<float> x0({n, kSequenceFrames, kFrameDim});
      std::vector<KeyposeCondition> conds(n);
      std::vector<const KeyposeCondition*> ptrs(n);
      Rng key_rng(derive_seed(seed, {3, step}));
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t i = order[start + b];
        std::copy(normalized[i].values().begin(), normalized[i].values().end(), x0.data() + b * per);
        const auto F = static_cast<std::size_t>(key_rng.integer(static_cast<std::int64_t>(train.min_keyposes),
                                                                static_cast<std::int64_t>(train.max_keyposes)));
        conds[b] = extract_keyposes(motions[i], F);
        ptrs[b] = &conds[b];
      }
      const auto res = diffusion::train_step(model, x0, ptrs, model.schedule(), train.condition_dropout,
                                             derive_seed(seed, {2, step}));
      nn::adamw_step(model.parameters(), opt);
      total += res.loss * static_cast<double>(n);
      count += n;
    }
    r.loss_history.push_back(total / static_cast<double>(count));
  }
  return r;
}

std::vector<MotionSequence> generate_motions(const GoDenoiser& denoiser, const std::vector<KeyposeCondition>& keyposes,
                                             double w, const std::vector<std::uint64_t>& seeds, int fps) {
  if (keyposes.size() != seeds.size() || keyposes.empty()) throw ShapeError("generate_motions: one seed per condition");
  std::vector<const KeyposeCondition*> ptrs;
  for (const auto& k : keyposes) {
    k.validate();
    ptrs.push_back(&k);
  }
  const auto x = diffusion::sample<KeyposeCondition>(denoiser, denoiser.schedule(), ptrs, diffusion::GuidanceConfig{.w = w},
                                                     {kSequenceFrames, kFrameDim}, seeds);
  std::vector<MotionSequence> out;
  for (std::size_t b = 0; b < keyposes.size(); ++b) {
    MotionSequence seq = denoiser.denormalize(x.data() + b * kSequenceFrames * kFrameDim, fps);
    seq.frames[0][0] = 0.0f;
    seq.frames[0][1] = 0.0f;
    for (const auto& f : seq.frames)
      for (float v : f)
        if (!std::isfinite(v)) throw NumericError("generated motion has non-finite values");
    seq.validate_model_length();
    out.push_back(std::move(seq));
  }
  return out;
}

MotionSequence generate_motion(const GoDenoiser& denoiser, const KeyposeCondition& keyposes, double w,
                               std::uint64_t seed, int fps) {
  return generate_motions(denoiser, {keyposes}, w, {seed}, fps).front();
}

MotionSequence interpolate_baseline(const KeyposeCondition& keyposes, std::size_t frame_count, int fps) {
  keyposes.validate();
  const auto& poses = keyposes.poses;
  const auto at = keyframe_indices(poses.size(), frame_count);
  const motion::Skeleton& sk = motion::Skeleton::canonical();
  std::vector<double> heights;
  std::vector<std::array<Eigen::Quaterniond, motion::kJointCount>> quats(poses.size());
  for (std::size_t k = 0; k < poses.size(); ++k) {
    heights.push_back(motion::grounded_root_height(poses[k], sk));
    for (int j = 0; j < motion::kJointCount; ++j) quats[k][j] = Eigen::Quaterniond(poses[k].rotation(j));
  }
  MotionSequence seq;
  seq.fps = fps;
  for (std::size_t f = 0; f < frame_count; ++f) {
    const int fi = static_cast<int>(f);
    std::size_t k = 0;
    while (k + 1 < poses.size() && at[k + 1] <= fi) ++k;
    PoseVector pose;
    double z;
    if (fi <= at.front() || fi >= at.back() || fi == at[k]) {
      const std::size_t src = fi <= at.front() ? 0 : (fi >= at.back() ? poses.size() - 1 : k);
      pose = poses[src];
      z = heights[src];
    } else {
      const double u = static_cast<double>(fi - at[k]) / static_cast<double>(at[k + 1] - at[k]);
      for (int j = 0; j < motion::kJointCount; ++j)
        pose.set_rotation(j, quats[k][j].slerp(u, quats[k + 1][j]).toRotationMatrix());
      z = (1.0 - u) * heights[k] + u * heights[k + 1];
    }
    seq.frames.push_back(motion::make_frame(0.0, 0.0, z, pose));
  }
  return seq;
}

}  // namespace promo::go
