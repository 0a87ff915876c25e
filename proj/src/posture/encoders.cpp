#include "promo/posture/encoders.hpp"

#include <cmath>

#include "promo/nn/contrastive.hpp"

namespace promo::posture {

using nn::Tape;
using nn::Tensor;
using nn::Var;

void RetrievalConfig::validate() const {
  if (token_embedding == 0 || gru_hidden == 0 || pose_hidden == 0 || embedding == 0 || max_tokens == 0)
    throw DomainError("retrieval encoder widths must be positive");
  if (!(initial_temperature > 0.0)) throw DomainError("retrieval temperature must be positive");
}

nlohmann::json RetrievalConfig::to_json() const {
  return {{"token_embedding", token_embedding}, {"gru_hidden", gru_hidden}, {"pose_hidden", pose_hidden},
          {"embedding", embedding},             {"max_tokens", max_tokens}, {"initial_temperature", initial_temperature}};
}

RetrievalConfig RetrievalConfig::from_json(const nlohmann::json& j) {
  RetrievalConfig c;
  c.token_embedding = j.at("token_embedding").get<std::size_t>();
  c.gru_hidden = j.at("gru_hidden").get<std::size_t>();
  c.pose_hidden = j.at("pose_hidden").get<std::size_t>();
  c.embedding = j.at("embedding").get<std::size_t>();
  c.max_tokens = j.at("max_tokens").get<std::size_t>();
  c.initial_temperature = j.at("initial_temperature").get<double>();
  c.validate();
  return c;
}

TextEncoderPhi::TextEncoderPhi(nn::ParameterStore<float>& store, const RetrievalConfig& c, Rng& rng)
    : max_tokens_(c.max_tokens),
      embed_(store, "phi.tokens", script::ScriptVocabulary::standard().size(), c.token_embedding, rng),
      gru_(store, "phi.gru", c.token_embedding, c.gru_hidden, rng),
      head_(store, "phi.head", 2 * c.gru_hidden, c.embedding, rng) {}

Var TextEncoderPhi::operator()(Tape<float>& tape, const std::vector<std::vector<int>>& tokens) const {
  if (tokens.empty()) throw ShapeError("text encoder: empty batch");
  std::vector<int> ids, offsets{0};
  for (const auto& seq : tokens) {
    if (seq.empty()) throw DomainError("text encoder: empty token sequence");
    const std::size_t n = std::min(seq.size(), max_tokens_);
    ids.insert(ids.end(), seq.begin(), seq.begin() + static_cast<std::ptrdiff_t>(n));
    offsets.push_back(static_cast<int>(ids.size()));
  }
  Var h = gru_(tape, embed_(tape, std::move(ids)), offsets);
  return tape.l2_normalize_rows(head_(tape, tape.segment_mean(h, offsets)));
}

PoseEncoderTheta::PoseEncoderTheta(nn::ParameterStore<float>& store, const RetrievalConfig& c, Rng& rng)
    : l1_(store, "theta.l1", motion::kPoseDim, c.pose_hidden, rng),
      l2_(store, "theta.l2", c.pose_hidden, c.pose_hidden, rng),
      l3_(store, "theta.l3", c.pose_hidden, c.embedding, rng) {}

Var PoseEncoderTheta::operator()(Tape<float>& tape, Var poses) const {
  if (tape.value(poses).rank() != 2 || tape.value(poses).cols() != motion::kPoseDim)
    throw ShapeError("pose encoder expects [batch, 132] input");
  Var h = tape.gelu(l1_(tape, poses));
  h = tape.gelu(l2_(tape, h));
  return tape.l2_normalize_rows(l3_(tape, h));
}

RetrievalModel::RetrievalModel(const RetrievalConfig& config, std::uint64_t seed) : config_((config.validate(), config)) {
  Rng rng(seed);
  phi_ = TextEncoderPhi(store_, config_, rng);
  theta_ = PoseEncoderTheta(store_, config_, rng);
  log_scale_ = &store_.add("retrieval.log_scale",
                           Tensor<float>::vector({static_cast<float>(std::log(1.0 / config_.initial_temperature))}));
}

double RetrievalModel::temperature() const { return std::exp(-static_cast<double>(log_scale_->value[0])); }

Tensor<float> pose_matrix(const std::vector<motion::PoseVector>& poses) {
  Tensor<float> m = Tensor<float>::matrix(poses.size(), motion::kPoseDim);
  for (std::size_t i = 0; i < poses.size(); ++i) std::copy(poses[i].values.begin(), poses[i].values.end(), m.row(i).begin());
  return m;
}

Tensor<float> RetrievalModel::encode_scripts(const std::vector<script::PostureScript>& scripts) const {
  std::vector<std::vector<int>> tokens;
  for (const auto& s : scripts) tokens.push_back(condition_tokens(s, config_.max_tokens));
  Tape<float> tape(Tape<float>::Options{.record = false});
  return tape.value(phi_(tape, tokens));
}

Tensor<float> RetrievalModel::encode_poses(const std::vector<motion::PoseVector>& poses) const {
  if (poses.empty()) throw ShapeError("pose encoder: empty batch");
  Tape<float> tape(Tape<float>::Options{.record = false});
  return tape.value(theta_(tape, tape.constant(pose_matrix(poses))));
}

namespace {

struct Batch {
  std::vector<std::vector<int>> tokens;
  Tensor<float> poses;
};

Batch make_batch(const std::vector<PosturePair>& data, const std::vector<std::size_t>& idx, std::size_t max_tokens) {
  Batch b;
  std::vector<motion::PoseVector> poses;
  for (std::size_t i : idx) {
    b.tokens.push_back(condition_tokens(data[i].script, max_tokens));
    poses.push_back(data[i].pose);
  }
  b.poses = pose_matrix(poses);
  return b;
}

}  // namespace

double retrieval_loss(const RetrievalModel& model, const std::vector<PosturePair>& batch) {
  if (batch.size() < 2) throw DomainError("retrieval loss needs a batch of at least 2");
  std::vector<std::size_t> idx(batch.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Batch b = make_batch(batch, idx, model.config().max_tokens);
  Tape<float> tape(Tape<float>::Options{.record = false});
  Var loss = nn::symmetric_contrastive_loss(tape, model.phi()(tape, b.tokens),
                                            model.theta()(tape, tape.constant(std::move(b.poses))),
                                            tape.constant_view(model.parameters().get("retrieval.log_scale").value));
  return tape.value(loss)[0];
}

double retrieval_top1(const RetrievalModel& model, const std::vector<PosturePair>& pairs, std::size_t batch) {
  if (batch < 2 || pairs.size() < batch) throw DomainError("retrieval_top1 needs at least one full batch of size >= 2");
  double total = 0.0;
  std::size_t batches = 0;
  for (std::size_t start = 0; start + batch <= pairs.size(); start += batch, ++batches) {
    std::vector<script::PostureScript> scripts;
    std::vector<motion::PoseVector> poses;
    for (std::size_t i = start; i < start + batch; ++i) {
      scripts.push_back(pairs[i].script);
      poses.push_back(pairs[i].pose);
    }
    total += nn::top1_accuracy(model.encode_scripts(scripts), model.encode_poses(poses));
  }
  return total / static_cast<double>(batches);
}

RetrievalTrainResult train_retrieval_encoders(const std::vector<PosturePair>& dataset, const RetrievalConfig& config,
                                              const RetrievalTrainConfig& train, std::uint64_t seed) {
  if (train.batch < 2) throw DomainError("retrieval training batch must be at least 2");
  if (dataset.size() < train.batch) throw DomainError("retrieval training needs at least one full batch");
  if (train.epochs < 0) throw DomainError("retrieval training: negative epochs");
  RetrievalTrainResult r;
  r.model = std::make_unique<RetrievalModel>(config, derive_seed(seed, {0}));
  RetrievalModel& m = *r.model;
  nn::AdamWState<float> opt(m.parameters(), train.optimizer);
  std::uint64_t step = 0;
  for (int epoch = 0; epoch < train.epochs; ++epoch) {
    Rng order_rng(derive_seed(seed, {1, static_cast<std::uint64_t>(epoch)}));
    const auto order = shuffled_indices(dataset.size(), order_rng);
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start + train.batch <= order.size(); start += train.batch, ++batches) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(start + train.batch));
      Batch b = make_batch(dataset, idx, config.max_tokens);
      Tape<float> tape(Tape<float>::Options{.train = true, .seed = derive_seed(seed, {2, step++})});
      Var loss = nn::symmetric_contrastive_loss(tape, m.phi()(tape, b.tokens),
                                                m.theta()(tape, tape.constant(std::move(b.poses))),
                                                tape.param(m.log_scale()));
      const double value = tape.value(loss)[0];
      if (!std::isfinite(value)) throw NumericError("non-finite retrieval loss");
      m.parameters().zero_grad();
      tape.backward(loss);
      nn::adamw_step(m.parameters(), opt);
      total += value;
    }
    r.loss_history.push_back(total / static_cast<double>(batches));
  }
  return r;
}

}  // namespace promo::posture
