#include "promo/posture/denoiser.hpp"

#include <algorithm>
#include <numeric>

namespace promo::posture {

using nn::Tape;
using nn::Tensor;
using nn::Var;

std::vector<int> condition_tokens(const script::PostureScript& s, std::size_t max_tokens) {
  const auto& vocab = script::ScriptVocabulary::standard();
  const int glue[] = {vocab.id("his"), vocab.id("is"), vocab.id("are"), vocab.id("and")};
  std::vector<int> out;
  for (int id : script::tokenize_unpadded(s)) {
    if (std::find(std::begin(glue), std::end(glue), id) != std::end(glue)) continue;
    if (out.size() == max_tokens) break;
    out.push_back(id);
  }
  if (out.empty()) throw DomainError("script has no content tokens");
  return out;
}

ScriptCondition ScriptCondition::from_script(const script::PostureScript& s, std::size_t max_tokens) {
  return {condition_tokens(s, max_tokens)};
}

void PostureDenoiserConfig::validate() const {
  if (latent == 0 || latent % 2 != 0) throw DomainError("posture latent dimension must be even and positive");
  if (heads < 1 || latent % static_cast<std::size_t>(heads) != 0)
    throw DomainError("posture latent dimension must be divisible by the head count");
  if (layers < 1 || text_layers < 0) throw DomainError("posture layer counts out of range");
  if (ffn == 0 || max_tokens == 0) throw DomainError("posture ffn width and token length must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("posture dropout must lie in [0, 1)");
  if (diffusion_steps < 1) throw DomainError("posture diffusion steps must be positive");
}

nlohmann::json PostureDenoiserConfig::to_json() const {
  return {{"latent", latent},       {"heads", heads},           {"layers", layers},
          {"text_layers", text_layers}, {"ffn", ffn},           {"dropout", dropout},
          {"max_tokens", max_tokens},   {"diffusion_steps", diffusion_steps},
          {"schedule", diffusion::to_string(schedule)}};
}

PostureDenoiserConfig PostureDenoiserConfig::from_json(const nlohmann::json& j) {
  PostureDenoiserConfig c;
  c.latent = j.at("latent").get<std::size_t>();
  c.heads = j.at("heads").get<int>();
  c.layers = j.at("layers").get<int>();
  c.text_layers = j.at("text_layers").get<int>();
  c.ffn = j.at("ffn").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.max_tokens = j.at("max_tokens").get<std::size_t>();
  c.diffusion_steps = j.at("diffusion_steps").get<int>();
  c.schedule = diffusion::schedule_kind_from_string(j.at("schedule").get<std::string>());
  c.validate();
  return c;
}

PostureDenoiser::PostureDenoiser(const PostureDenoiserConfig& config, std::uint64_t seed)
    : config_((config.validate(), config)), schedule_(diffusion::make_schedule(config.schedule, config.diffusion_steps)) {
  Rng rng(seed);
  const std::size_t d = config_.latent;
  const auto drop = static_cast<float>(config_.dropout);
  input_ = nn::Linear<float>(store_, "posture.input", motion::kPoseDim, d, rng);
  time_in_ = nn::Linear<float>(store_, "posture.time.in", d, d, rng);
  time_out_ = nn::Linear<float>(store_, "posture.time.out", d, d, rng);
  tokens_ = nn::Embedding<float>(store_, "posture.tokens", script::ScriptVocabulary::standard().size(), d, rng);
  token_table_ = &store_.get("posture.tokens.table");
  null_token_ = &store_.add("posture.null_token", nn::init_normal<float>({1, d}, 0.02, rng));
  for (int l = 0; l < config_.text_layers; ++l) {
    const std::string n = "posture.text" + std::to_string(l);
    TextBlock b;
    b.ln_attn = nn::LayerNorm<float>(store_, n + ".ln_attn", d);
    b.attn = nn::MultiHeadAttention<float>(store_, n + ".attn", d, config_.heads, rng);
    b.ln_ff = nn::LayerNorm<float>(store_, n + ".ln_ff", d);
    b.ff = nn::FeedForward<float>(store_, n + ".ff", d, config_.ffn, rng, drop);
    text_blocks_.push_back(b);
  }
  ln_memory_ = nn::LayerNorm<float>(store_, "posture.ln_memory", d);
  for (int l = 0; l < config_.layers; ++l) {
    const std::string n = "posture.layer" + std::to_string(l);
    Block b;
    b.ln_res = nn::LayerNorm<float>(store_, n + ".ln_res", d);
    b.time_proj = nn::Linear<float>(store_, n + ".time_proj", d, d, rng);
    b.res_ff = nn::FeedForward<float>(store_, n + ".res_ff", d, config_.ffn, rng, drop);
    b.ln_attn = nn::LayerNorm<float>(store_, n + ".ln_attn", d);
    b.attn = nn::MultiHeadAttention<float>(store_, n + ".attn", d, config_.heads, rng);
    b.ln_ff = nn::LayerNorm<float>(store_, n + ".ln_ff", d);
    b.ff = nn::FeedForward<float>(store_, n + ".ff", d, config_.ffn, rng, drop);
    blocks_.push_back(b);
  }
  ln_out_ = nn::LayerNorm<float>(store_, "posture.ln_out", d);
  output_ = nn::Linear<float>(store_, "posture.output", d, motion::kPoseDim, rng);
}

Var PostureDenoiser::memory(Tape<float>& tape, const std::vector<const ScriptCondition*>& conditions,
                            std::vector<int>& key_offsets) const {
  const int null_id = static_cast<int>(tokens_.vocab());
  std::vector<int> ids;
  std::vector<double> positions;
  key_offsets.assign(1, 0);
  for (const ScriptCondition* c : conditions) {
    if (c) {
      if (c->tokens.empty()) throw DomainError("empty script condition");
      const std::size_t n = std::min(c->tokens.size(), config_.max_tokens);
      for (std::size_t i = 0; i < n; ++i) {
        if (c->tokens[i] < 0 || c->tokens[i] >= null_id) throw DomainError("script token id out of range");
        ids.push_back(c->tokens[i]);
        positions.push_back(static_cast<double>(i));
      }
    } else {
      ids.push_back(null_id);
      positions.push_back(0.0);
    }
    key_offsets.push_back(static_cast<int>(ids.size()));
  }
  // Embedding rows and the null token share one gather so a batch can mix both.
  Var table = tape.concat_rows(std::vector<Var>{tape.param(*token_table_), tape.param(*null_token_)});
  Var m = tape.add(tape.gather_rows(table, std::move(ids)),
                   tape.constant(nn::sinusoidal_table<float>(positions, config_.latent)));
  const auto layout = nn::AttentionLayout::self(key_offsets);
  for (const TextBlock& b : text_blocks_) {
    m = tape.add(m, b.attn(tape, b.ln_attn(tape, m), b.ln_attn(tape, m), layout));
    m = tape.add(m, b.ff(tape, b.ln_ff(tape, m)));
  }
  return ln_memory_(tape, m);
}

Var PostureDenoiser::pose_path(Tape<float>& tape, Var x_t, const std::vector<int>& steps,
                               const CrossAttend& cross) const {
  const auto& xv = tape.value(x_t);
  if (xv.rank() != 2 || xv.cols() != motion::kPoseDim) throw ShapeError("posture denoiser expects [batch, 132] input");
  if (steps.size() != xv.rows()) throw ShapeError("posture denoiser: one timestep per sample required");
  std::vector<double> t(steps.begin(), steps.end());
  Var temb = time_out_(tape, tape.gelu(time_in_(tape, tape.constant(nn::sinusoidal_table<float>(t, config_.latent)))));
  Var h = input_(tape, x_t);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const Block& b = blocks_[l];
    h = tape.add(h, b.res_ff(tape, tape.add(b.ln_res(tape, h), b.time_proj(tape, temb))));
    h = tape.add(h, cross(tape, static_cast<int>(l), b.ln_attn(tape, h)));
    h = tape.add(h, b.ff(tape, b.ln_ff(tape, h)));
  }
  return output_(tape, ln_out_(tape, h));
}

namespace {
nn::AttentionLayout cross_layout(std::size_t batch, const std::vector<int>& key_offsets) {
  nn::AttentionLayout layout;
  layout.query_offsets.resize(batch + 1);
  std::iota(layout.query_offsets.begin(), layout.query_offsets.end(), 0);
  layout.key_offsets = key_offsets;
  return layout;
}
}  // namespace

Var PostureDenoiser::forward(Tape<float>& tape, Var x_t, const std::vector<int>& steps,
                             const std::vector<const ScriptCondition*>& conditions) const {
  if (conditions.size() != tape.value(x_t).rows()) throw ShapeError("posture denoiser: one condition per sample");
  std::vector<int> offsets;
  Var mem = memory(tape, conditions, offsets);
  const auto layout = cross_layout(conditions.size(), offsets);
  return pose_path(tape, x_t, steps, [&](Tape<float>& tp, int l, Var q) { return blocks_[l].attn(tp, q, mem, layout); });
}

class PostureDenoiser::CachedSession final : public Session {
 public:
  CachedSession(const PostureDenoiser& model, const std::vector<const ScriptCondition*>& conditions)
      : model_(model), batch_(conditions.size()) {
    Tape<float> tape(Tape<float>::Options{.train = false, .record = false});
    std::vector<int> offsets;
    Var mem = model.memory(tape, conditions, offsets);
    layout_ = cross_layout(batch_, offsets);
    for (const Block& b : model.blocks_) {
      auto [k, v] = b.attn.project_memory(tape, mem);
      keys_.push_back(tape.value(k));
      values_.push_back(tape.value(v));
    }
  }

  Tensor<float> predict(const Tensor<float>& x_t, int t) override {
    if (x_t.rank() != 2 || x_t.rows() != batch_) throw ShapeError("posture session: batch size differs from session");
    model_.schedule_.check_step(t);
    Tape<float> tape(Tape<float>::Options{.train = false, .record = false});
    Var out = model_.pose_path(tape, tape.constant_view(x_t), std::vector<int>(batch_, t),
                               [&](Tape<float>& tp, int l, Var q) {
                                 return model_.blocks_[l].attn.attend(tp, q, tp.constant_view(keys_[l]),
                                                                      tp.constant_view(values_[l]), layout_);
                               });
    return tape.value(out);
  }

 private:
  const PostureDenoiser& model_;
  std::size_t batch_;
  nn::AttentionLayout layout_;
  std::vector<Tensor<float>> keys_, values_;
};

std::unique_ptr<diffusion::Denoiser<ScriptCondition>::Session> PostureDenoiser::session(
    const std::vector<const ScriptCondition*>& conditions) const {
  if (conditions.empty()) throw ShapeError("posture session: empty batch");
  return std::make_unique<CachedSession>(*this, conditions);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i - 1)))]);
  return idx;
}

std::vector<double> train_posture_diffuser(PostureDenoiser& model, const std::vector<PosturePair>& dataset,
                                           const PostureTrainConfig& train, std::uint64_t seed) {
  if (dataset.empty()) throw DomainError("posture training needs a nonempty dataset");
  if (train.epochs < 0 || train.batch == 0) throw DomainError("posture training: invalid epochs or batch size");
  std::vector<ScriptCondition> conditions;
  conditions.reserve(dataset.size());
  for (const auto& p : dataset) {
    p.pose.validate();
    conditions.push_back(ScriptCondition::from_script(p.script, model.config().max_tokens));
  }
  nn::AdamWState<float> opt(model.parameters(), train.optimizer);
  std::vector<double> history;
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    Rng order_rng(derive_seed(seed, {1, static_cast<std::uint64_t>(epoch)}));
    const auto order = shuffled_indices(dataset.size(), order_rng);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t start = 0; start < order.size(); start += train.batch) {
      const std::size_t n = std::min(train.batch, order.size() - start);
      Tensor<float> x0 = Tensor<float>::matrix(n, motion::kPoseDim);
      std::vector<const ScriptCondition*> conds(n);
      for (std::size_t b = 0; b < n; ++b) {
        const std::size_t i = order[start + b];
        std::copy(dataset[i].pose.values.begin(), dataset[i].pose.values.end(), x0.row(b).begin());
        conds[b] = &conditions[i];
      }
      const auto r = diffusion::train_step(model, x0, conds, model.schedule(), train.condition_dropout,
                                           derive_seed(seed, {2, step++}));
      nn::adamw_step(model.parameters(), opt);
      total += r.loss * static_cast<double>(n);
      count += n;
    }
    history.push_back(total / static_cast<double>(count));
  }
  return history;
}

PostureTrainResult train_posture_diffuser(const std::vector<PosturePair>& dataset, const PostureDenoiserConfig& model,
                                          const PostureTrainConfig& train, std::uint64_t seed) {
  if (dataset.empty()) throw DomainError("posture training needs a nonempty dataset");
  PostureTrainResult r;
  r.model = std::make_unique<PostureDenoiser>(model, derive_seed(seed, {0}));
  r.loss_history = train_posture_diffuser(*r.model, dataset, train, seed);
  return r;
}

}  // namespace promo::posture
