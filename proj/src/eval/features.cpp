#include "promo/eval/features.hpp"

#include <algorithm>
#include <cmath>

#include "promo/nn/contrastive.hpp"

namespace promo::eval {

using motion::kFrameDim;
using motion::kSequenceFrames;
using nn::Tape;
using nn::Tensor;
using nn::Var;

void FeatureExtractorConfig::validate() const {
  if (token_embedding == 0 || gru_hidden == 0 || motion_hidden == 0 || feature_dim == 0 || max_tokens == 0)
    throw DomainError("feature extractor widths must be positive");
  if (motion_hidden % 2 != 0) throw DomainError("feature extractor motion width must be even");
  if (!(initial_temperature > 0.0)) throw DomainError("feature extractor temperature must be positive");
}

nlohmann::json FeatureExtractorConfig::to_json() const {
  return {{"token_embedding", token_embedding}, {"gru_hidden", gru_hidden}, {"motion_hidden", motion_hidden},
          {"feature_dim", feature_dim},         {"max_tokens", max_tokens}, {"initial_temperature", initial_temperature}};
}

FeatureExtractorConfig FeatureExtractorConfig::from_json(const nlohmann::json& j) {
  FeatureExtractorConfig c;
  c.token_embedding = j.at("token_embedding").get<std::size_t>();
  c.gru_hidden = j.at("gru_hidden").get<std::size_t>();
  c.motion_hidden = j.at("motion_hidden").get<std::size_t>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.max_tokens = j.at("max_tokens").get<std::size_t>();
  c.initial_temperature = j.at("initial_temperature").get<double>();
  c.validate();
  return c;
}

std::vector<int> text_tokens(const MotionText& text, std::size_t max_tokens) {
  if (text.empty()) throw DomainError("motion text has no scripts");
  std::vector<int> ids;
  for (const auto& s : text) {
    const auto t = posture::condition_tokens(s, max_tokens);
    ids.insert(ids.end(), t.begin(), t.end());
    if (ids.size() >= max_tokens) break;
  }
  if (ids.size() > max_tokens) ids.resize(max_tokens);
  return ids;
}

namespace {

posture::RetrievalConfig text_config(const FeatureExtractorConfig& c) {
  posture::RetrievalConfig r;
  r.token_embedding = c.token_embedding;
  r.gru_hidden = c.gru_hidden;
  r.embedding = c.feature_dim;
  r.max_tokens = c.max_tokens;
  return r;
}

}  // namespace

FeatureExtractorPair::FeatureExtractorPair(const FeatureExtractorConfig& config, const go::FeatureStats& stats,
                                           std::uint64_t seed)
    : config_((config.validate(), config)), stats_(stats) {
  Rng rng(seed);
  text_ = posture::TextEncoderPhi(store_, text_config(config_), rng);
  m1_ = nn::Linear<float>(store_, "motion.l1", kFrameDim, config_.motion_hidden, rng);
  m2_ = nn::Linear<float>(store_, "motion.l2", config_.motion_hidden, config_.motion_hidden, rng);
  m3_ = nn::Linear<float>(store_, "motion.l3", config_.motion_hidden, config_.feature_dim, rng);
  log_scale_ = &store_.add("features.log_scale",
                           Tensor<float>::vector({static_cast<float>(std::log(1.0 / config_.initial_temperature))}));
}

Var FeatureExtractorPair::motion_features(Tape<float>& tape,
                                          const std::vector<const motion::MotionSequence*>& motions) const {
  if (motions.empty()) throw ShapeError("motion feature extractor: empty batch");
  const std::size_t rows = motions.size() * kSequenceFrames;
  Tensor<float> x({rows, kFrameDim});
  std::vector<double> positions(rows);
  std::vector<int> offsets{0};
  for (std::size_t b = 0; b < motions.size(); ++b) {
    motions[b]->validate_model_length();
    for (std::size_t f = 0; f < kSequenceFrames; ++f) {
      const std::size_t r = b * kSequenceFrames + f;
      positions[r] = static_cast<double>(f);
      for (std::size_t c = 0; c < kFrameDim; ++c)
        x.at(r, c) = (motions[b]->frames[f][c] - stats_.mean[c]) / stats_.stddev[c];
    }
    offsets.push_back(static_cast<int>((b + 1) * kSequenceFrames));
  }
  Var h = tape.add(m1_(tape, tape.constant(std::move(x))),
                   tape.constant(nn::sinusoidal_table<float>(positions, config_.motion_hidden)));
  h = tape.gelu(m2_(tape, tape.gelu(h)));
  return tape.l2_normalize_rows(m3_(tape, tape.segment_mean(h, std::move(offsets))));
}

Var FeatureExtractorPair::text_features(Tape<float>& tape, const std::vector<const MotionText*>& texts) const {
  std::vector<std::vector<int>> tokens;
  for (const auto* t : texts) tokens.push_back(text_tokens(*t, config_.max_tokens));
  return text_(tape, tokens);
}

Tensor<float> FeatureExtractorPair::encode_motions(const std::vector<motion::MotionSequence>& motions) const {
  std::vector<const motion::MotionSequence*> ptrs;
  for (const auto& m : motions) ptrs.push_back(&m);
  Tape<float> tape(Tape<float>::Options{.record = false});
  return tape.value(motion_features(tape, ptrs));
}

Tensor<float> FeatureExtractorPair::encode_texts(const std::vector<MotionText>& texts) const {
  std::vector<const MotionText*> ptrs;
  for (const auto& t : texts) ptrs.push_back(&t);
  Tape<float> tape(Tape<float>::Options{.record = false});
  return tape.value(text_features(tape, ptrs));
}

FeatureTrainResult train_feature_extractors(const std::vector<MotionTextPair>& dataset,
                                            const FeatureExtractorConfig& config, const FeatureTrainConfig& train,
                                            std::uint64_t seed) {
  if (train.batch < 2) throw DomainError("feature extractor batch must be at least 2");
  if (dataset.size() < train.batch) throw DomainError("feature extractor training needs at least one full batch");
  if (train.epochs < 0) throw DomainError("feature extractor training: negative epochs");
  std::vector<motion::MotionSequence> motions;
  for (const auto& p : dataset) motions.push_back(p.motion);
  FeatureTrainResult r;
  r.model = std::make_unique<FeatureExtractorPair>(config, go::FeatureStats::fit(motions), derive_seed(seed, {0}));
  FeatureExtractorPair& m = *r.model;
  nn::AdamWState<float> opt(m.parameters(), train.optimizer);
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    Rng order_rng(derive_seed(seed, {1, static_cast<std::uint64_t>(epoch)}));
    const auto order = posture::shuffled_indices(dataset.size(), order_rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + train.batch <= order.size(); start += train.batch, ++batches) {
      std::vector<const motion::MotionSequence*> ms;
      std::vector<const MotionText*> ts;
      for (std::size_t i = start; i < start + train.batch; ++i) {
        ms.push_back(&dataset[order[i]].motion);
        ts.push_back(&dataset[order[i]].text);
      }
      Tape<float> tape(Tape<float>::Options{.train = true, .seed = derive_seed(seed, {2, step++})});
      Var loss = nn::symmetric_contrastive_loss(tape, m.text_features(tape, ts), m.motion_features(tape, ms),
                                                tape.param(m.log_scale()));
      const double value = tape.value(loss)[0];
      if (!std::isfinite(value)) throw NumericError("non-finite feature extractor loss");
      m.parameters().zero_grad();
      tape.backward(loss);
      nn::adamw_step(m.parameters(), opt);
      total += value;
    }
    r.loss_history.push_back(total / static_cast<double>(batches));
  }
  return r;
}

double feature_top1(const FeatureExtractorPair& model, const std::vector<MotionTextPair>& pairs, std::size_t batch) {
  if (batch < 2 || pairs.size() < batch) throw DomainError("feature_top1 needs at least one full batch of size >= 2");
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start + batch <= pairs.size(); start += batch, ++batches) {
    std::vector<motion::MotionSequence> ms;
    std::vector<MotionText> ts;
    for (std::size_t i = start; i < start + batch; ++i) {
      ms.push_back(pairs[i].motion);
      ts.push_back(pairs[i].text);
    }
    total += nn::top1_accuracy(model.encode_texts(ts), model.encode_motions(ms));
  }
  return total / static_cast<double>(batches);
}

std::vector<std::size_t> similarity_filter(const Tensor<float>& a, const Tensor<float>& b, double alpha) {
  std::vector<std::size_t> keep;
  if (a.rows() == 0) return keep;
  if (b.rows() > 0 && a.cols() != b.cols()) throw ShapeError("similarity_filter: feature widths differ");
  auto norm = [](std::span<const float> r) {
    double s = 0.0;
    for (float v : r) s += double(v) * v;
    return std::sqrt(s);
  };
  std::vector<double> b_norm(b.rows());
  for (std::size_t j = 0; j < b.rows(); ++j) b_norm[j] = norm(b.row(j));
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto ra = a.row(i);
    const double na = norm(ra);
    bool drop = false;
    for (std::size_t j = 0; j < b.rows() && !drop; ++j) {
      double dot = 0.0;
      const auto rb = b.row(j);
      for (std::size_t c = 0; c < ra.size(); ++c) dot += double(ra[c]) * rb[c];
      const double denom = na * b_norm[j];
      drop = denom > 0.0 && std::clamp(dot / denom, -1.0, 1.0) > alpha;
    }
    if (!drop) keep.push_back(i);
  }
  return keep;
}

std::vector<std::size_t> similarity_filter(const std::vector<MotionText>& texts_a, const std::vector<MotionText>& texts_b,
                                           const FeatureExtractorPair& encoder, double alpha) {
  std::vector<std::size_t> all(texts_a.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  if (texts_a.empty() || texts_b.empty()) return all;
  return similarity_filter(encoder.encode_texts(texts_a), encoder.encode_texts(texts_b), alpha);
}

}  // namespace promo::eval
