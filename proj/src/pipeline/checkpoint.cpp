#include "promo/pipeline/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <set>
#include <sstream>

namespace promo::pipeline {

namespace {

constexpr std::string_view kMagic = "PROMOCKP";

template <class U>
void put(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::string_view take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw DomainError("checkpoint: truncated file");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <class U>
  U get() {
    const auto s = take(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(s[i])) << (8 * i);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::size_t element_count(const nlohmann::json& shape) {
  std::size_t n = 1;
  for (const auto& d : shape) n *= d.get<std::size_t>();
  return n;
}

void check_kind(const Checkpoint& ckpt, std::string_view kind) {
  if (ckpt.kind() != kind) throw DomainError("checkpoint holds a " + ckpt.kind() + " model, expected " + std::string(kind));
}

void check_expected(const nlohmann::json& stored, const nlohmann::json& expected, std::string_view kind) {
  if (stored != expected)
    throw DomainError("checkpoint " + std::string(kind) + " dimensions " + stored.dump() + " do not match the configured " +
                      expected.dump());
}

}  // namespace

std::string Checkpoint::serialize() const {
  std::string out(kMagic);
  const std::string head = header.dump();
  put<std::uint64_t>(out, head.size());
  out += head;
  put<std::uint64_t>(out, blocks.size());
  for (const auto& b : blocks) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(b.name.size()));
    out += b.name;
    put<std::uint64_t>(out, b.values.size());
    for (float v : b.values) put<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

Checkpoint Checkpoint::deserialize(std::string_view bytes) {
  Reader r(bytes);
  if (r.take(kMagic.size()) != kMagic) throw DomainError("checkpoint: bad magic");
  Checkpoint c;
  const auto head_len = r.get<std::uint64_t>();
  try {
    c.header = nlohmann::json::parse(r.take(head_len));
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("checkpoint: malformed header: ") + e.what());
  }
  if (c.header.value("version", 0) != kCheckpointVersion) throw DomainError("checkpoint: unsupported format version");
  const auto count = r.get<std::uint64_t>();
  std::set<std::string> names;
  for (std::uint64_t i = 0; i < count; ++i) {
    ParameterBlock b;
    b.name = std::string(r.take(r.get<std::uint32_t>()));
    if (!names.insert(b.name).second) throw DomainError("checkpoint: duplicate parameter " + b.name);
    const auto n = r.get<std::uint64_t>();
    if (n > bytes.size() / 4) throw DomainError("checkpoint: truncated file");
    b.values.resize(n);
    for (auto& v : b.values) v = std::bit_cast<float>(r.get<std::uint32_t>());
    c.blocks.push_back(std::move(b));
  }
  if (!r.done()) throw DomainError("checkpoint: trailing bytes");

  const auto& layout = c.header.at("parameters");
  if (layout.size() != c.blocks.size()) throw DomainError("checkpoint: layout and block count disagree");
  for (std::size_t i = 0; i < c.blocks.size(); ++i)
    if (layout[i].at("name") != c.blocks[i].name || element_count(layout[i].at("shape")) != c.blocks[i].values.size())
      throw DomainError("checkpoint: layout disagrees with block " + c.blocks[i].name);
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  const std::string bytes = serialize();
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DomainError("checkpoint: cannot write " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("checkpoint: cannot open " + path.string());
  std::stringstream bytes;
  bytes << in.rdbuf();
  return deserialize(bytes.str());
}

Checkpoint make_checkpoint(std::string_view kind, const nlohmann::json& config, const nn::ParameterStore<float>& store,
                           const CheckpointInfo& info, const nlohmann::json& extras) {
  Checkpoint c;
  c.header = {{"format", "promo-checkpoint"},
              {"version", kCheckpointVersion},
              {"kind", kind},
              {"config", config},
              {"seed", info.seed},
              {"epochs", info.epochs},
              {"config_hash", info.config_hash},
              {"data_sha256", info.data_sha256},
              {"extras", extras}};
  auto& layout = c.header["parameters"] = nlohmann::json::array();
  for (const auto& p : store) {
    layout.push_back({{"name", p.name}, {"shape", p.value.shape()}});
    c.blocks.push_back({p.name, std::vector<float>(p.value.values().begin(), p.value.values().end())});
  }
  return c;
}

CheckpointInfo checkpoint_info(const Checkpoint& ckpt) {
  return {ckpt.header.at("seed").get<std::uint64_t>(), ckpt.header.at("epochs").get<int>(),
          ckpt.header.at("config_hash").get<std::string>(), ckpt.header.at("data_sha256").get<std::string>()};
}

void load_parameters(nn::ParameterStore<float>& store, const Checkpoint& ckpt) {
  const auto& layout = ckpt.header.at("parameters");
  if (layout.size() != store.size())
    throw ShapeError("checkpoint has " + std::to_string(layout.size()) + " parameters, model has " +
                     std::to_string(store.size()));
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto name = layout[i].at("name").get<std::string>();
    if (!store.contains(name)) throw ShapeError("checkpoint parameter " + name + " is not part of the model");
    if (layout[i].at("shape").get<nn::Shape>() != store.get(name).value.shape())
      throw ShapeError("checkpoint parameter " + name + " has a different shape than the model");
  }
  for (const auto& b : ckpt.blocks) std::copy(b.values.begin(), b.values.end(), store.get(b.name).value.data());
}

Checkpoint to_checkpoint(const posture::PostureDenoiser& model, const CheckpointInfo& info) {
  return make_checkpoint(kPostureKind, model.config().to_json(), model.parameters(), info);
}

Checkpoint to_checkpoint(const posture::RetrievalModel& model, const CheckpointInfo& info) {
  return make_checkpoint(kEncodersKind, model.config().to_json(), model.parameters(), info);
}

Checkpoint to_checkpoint(const go::GoDenoiser& model, const CheckpointInfo& info) {
  return make_checkpoint(kGoKind, model.config().to_json(), model.parameters(), info,
                         {{"stats", model.stats().to_json()}});
}

Checkpoint to_checkpoint(const eval::FeatureExtractorPair& model, const CheckpointInfo& info) {
  return make_checkpoint(kExtractorsKind, model.config().to_json(), model.parameters(), info,
                         {{"stats", model.stats().to_json()}});
}

std::unique_ptr<posture::PostureDenoiser> load_posture(const Checkpoint& ckpt,
                                                       const posture::PostureDenoiserConfig* expected) {
  check_kind(ckpt, kPostureKind);
  const auto config = posture::PostureDenoiserConfig::from_json(ckpt.header.at("config"));
  if (expected) check_expected(config.to_json(), expected->to_json(), kPostureKind);
  auto model = std::make_unique<posture::PostureDenoiser>(config, checkpoint_info(ckpt).seed);
  load_parameters(model->parameters(), ckpt);
  return model;
}

std::unique_ptr<posture::RetrievalModel> load_encoders(const Checkpoint& ckpt, const posture::RetrievalConfig* expected) {
  check_kind(ckpt, kEncodersKind);
  const auto config = posture::RetrievalConfig::from_json(ckpt.header.at("config"));
  if (expected) check_expected(config.to_json(), expected->to_json(), kEncodersKind);
  auto model = std::make_unique<posture::RetrievalModel>(config, checkpoint_info(ckpt).seed);
  load_parameters(model->parameters(), ckpt);
  return model;
}

std::unique_ptr<go::GoDenoiser> load_go(const Checkpoint& ckpt, const go::GoDenoiserConfig* expected) {
  check_kind(ckpt, kGoKind);
  const auto config = go::GoDenoiserConfig::from_json(ckpt.header.at("config"));
  if (expected) check_expected(config.to_json(), expected->to_json(), kGoKind);
  const auto stats = go::FeatureStats::from_json(ckpt.header.at("extras").at("stats"));
  auto model = std::make_unique<go::GoDenoiser>(config, stats, checkpoint_info(ckpt).seed);
  load_parameters(model->parameters(), ckpt);
  return model;
}

std::unique_ptr<eval::FeatureExtractorPair> load_extractors(const Checkpoint& ckpt,
                                                            const eval::FeatureExtractorConfig* expected) {
  check_kind(ckpt, kExtractorsKind);
  const auto config = eval::FeatureExtractorConfig::from_json(ckpt.header.at("config"));
  if (expected) check_expected(config.to_json(), expected->to_json(), kExtractorsKind);
  const auto stats = go::FeatureStats::from_json(ckpt.header.at("extras").at("stats"));
  auto model = std::make_unique<eval::FeatureExtractorPair>(config, stats, checkpoint_info(ckpt).seed);
  load_parameters(model->parameters(), ckpt);
  return model;
}

}  // namespace promo::pipeline
