#include "promo/pipeline/config.hpp"

#include <openssl/evp.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace promo::pipeline {

namespace pt = boost::property_tree;

void PipelineConfig::validate() const {
  posture.validate();
  encoders.validate();
  go.validate();
  extractors.validate();
  if (!std::isfinite(guidance)) throw DomainError("config: guidance weight must be finite");
  if (candidates < 1 || candidates > kMaxCandidates) throw DomainError("config: candidate count must lie in [1, 256]");
  planner::PlannerRequest{"validate", frames, fps}.validate();
  if (training.batch < 1) throw DomainError("config: batch must be positive");
  if (training.min_keyposes < 1 || training.min_keyposes > training.max_keyposes ||
      training.max_keyposes > go::kMaxKeyposes)
    throw DomainError("config: keypose range must satisfy 1 <= min <= max <= 16");
  for (double lr : {training.posture_lr, training.encoders_lr, training.go_lr, training.extractors_lr})
    if (!(lr > 0.0) || !std::isfinite(lr)) throw DomainError("config: learning rates must be positive");
  if (threads < 1) throw DomainError("config: threads must be positive");
  endpoint.validate();
}

void PipelineConfig::require_generation_checkpoints() const {
  const std::pair<const char*, const std::filesystem::path*> needed[] = {
      {"posture", &paths.posture}, {"encoders", &paths.encoders}, {"go", &paths.go}};
  for (const auto& [name, path] : needed)
    if (!std::filesystem::is_regular_file(*path))
      throw DomainError(std::string("missing ") + name + " checkpoint: " + path->string());
}

nlohmann::json PipelineConfig::to_json() const {
  return {{"posture", posture.to_json()},
          {"encoders", encoders.to_json()},
          {"go", go.to_json()},
          {"extractors", extractors.to_json()},
          {"guidance", guidance},
          {"training",
           {{"batch", training.batch},
            {"posture_lr", training.posture_lr},
            {"encoders_lr", training.encoders_lr},
            {"go_lr", training.go_lr},
            {"extractors_lr", training.extractors_lr},
            {"min_keyposes", training.min_keyposes},
            {"max_keyposes", training.max_keyposes}}},
          {"planner",
           {{"live", live_planner},
            {"base_url", endpoint.base_url},
            {"model", endpoint.model},
            {"api_key_env", endpoint.api_key_env},
            {"timeout_seconds", endpoint.timeout_seconds},
            {"max_retries", endpoint.max_retries},
            {"retry_backoff_ms", endpoint.retry_backoff_ms}}},
          {"seed", seed},
          {"candidates", candidates},
          {"frames", frames},
          {"fps", fps}};
}

std::string PipelineConfig::hash() const { return sha256_hex(to_json().dump()).substr(0, 16); }

namespace {

using Setter = std::function<void(const std::string&)>;

template <class T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (in.fail() || !(in >> std::ws).eof()) throw DomainError("config: cannot parse " + key + " = " + text);
  if constexpr (std::is_unsigned_v<T>)
    if (text.find('-') != std::string::npos) throw DomainError("config: " + key + " must be nonnegative");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw DomainError("config: cannot parse " + key + " = " + text + " as a boolean");
}

template <class T>
Setter set(T& target, const std::string& key) {
  return [&target, key](const std::string& text) {
    if constexpr (std::is_same_v<T, bool>)
      target = parse_bool(key, text);
    else if constexpr (std::is_same_v<T, std::string>)
      target = text;
    else if constexpr (std::is_same_v<T, diffusion::ScheduleKind>)
      target = diffusion::schedule_kind_from_string(text);
    else if constexpr (std::is_same_v<T, std::filesystem::path>)
      target = text;
    else
      target = parse_value<T>(key, text);
  };
}

std::map<std::string, Setter> setters(PipelineConfig& c) {
  std::map<std::string, Setter> s;
  auto add = [&s](const std::string& key, Setter f) { s.emplace(key, std::move(f)); };
  add("posture.latent", set(c.posture.latent, "posture.latent"));
  add("posture.heads", set(c.posture.heads, "posture.heads"));
  add("posture.layers", set(c.posture.layers, "posture.layers"));
  add("posture.text_layers", set(c.posture.text_layers, "posture.text_layers"));
  add("posture.ffn", set(c.posture.ffn, "posture.ffn"));
  add("posture.dropout", set(c.posture.dropout, "posture.dropout"));
  add("posture.max_tokens", set(c.posture.max_tokens, "posture.max_tokens"));
  add("encoders.token_embedding", set(c.encoders.token_embedding, "encoders.token_embedding"));
  add("encoders.gru_hidden", set(c.encoders.gru_hidden, "encoders.gru_hidden"));
  add("encoders.pose_hidden", set(c.encoders.pose_hidden, "encoders.pose_hidden"));
  add("encoders.embedding", set(c.encoders.embedding, "encoders.embedding"));
  add("encoders.max_tokens", set(c.encoders.max_tokens, "encoders.max_tokens"));
  add("encoders.initial_temperature", set(c.encoders.initial_temperature, "encoders.initial_temperature"));
  add("go.latent", set(c.go.latent, "go.latent"));
  add("go.heads", set(c.go.heads, "go.heads"));
  add("go.layers", set(c.go.layers, "go.layers"));
  add("go.ffn", set(c.go.ffn, "go.ffn"));
  add("go.dropout", set(c.go.dropout, "go.dropout"));
  add("extractors.token_embedding", set(c.extractors.token_embedding, "extractors.token_embedding"));
  add("extractors.gru_hidden", set(c.extractors.gru_hidden, "extractors.gru_hidden"));
  add("extractors.motion_hidden", set(c.extractors.motion_hidden, "extractors.motion_hidden"));
  add("extractors.feature_dim", set(c.extractors.feature_dim, "extractors.feature_dim"));
  add("extractors.max_tokens", set(c.extractors.max_tokens, "extractors.max_tokens"));
  add("extractors.initial_temperature", set(c.extractors.initial_temperature, "extractors.initial_temperature"));
  add("diffusion.posture_steps", set(c.posture.diffusion_steps, "diffusion.posture_steps"));
  add("diffusion.posture_schedule", set(c.posture.schedule, "diffusion.posture_schedule"));
  add("diffusion.go_steps", set(c.go.diffusion_steps, "diffusion.go_steps"));
  add("diffusion.go_schedule", set(c.go.schedule, "diffusion.go_schedule"));
  add("diffusion.guidance", set(c.guidance, "diffusion.guidance"));
  add("training.batch", set(c.training.batch, "training.batch"));
  add("training.posture_lr", set(c.training.posture_lr, "training.posture_lr"));
  add("training.encoders_lr", set(c.training.encoders_lr, "training.encoders_lr"));
  add("training.go_lr", set(c.training.go_lr, "training.go_lr"));
  add("training.extractors_lr", set(c.training.extractors_lr, "training.extractors_lr"));
  add("training.min_keyposes", set(c.training.min_keyposes, "training.min_keyposes"));
  add("training.max_keyposes", set(c.training.max_keyposes, "training.max_keyposes"));
  add("planner.live", set(c.live_planner, "planner.live"));
  add("planner.base_url", set(c.endpoint.base_url, "planner.base_url"));
  add("planner.model", set(c.endpoint.model, "planner.model"));
  add("planner.api_key_env", set(c.endpoint.api_key_env, "planner.api_key_env"));
  add("planner.timeout_seconds", set(c.endpoint.timeout_seconds, "planner.timeout_seconds"));
  add("planner.max_retries", set(c.endpoint.max_retries, "planner.max_retries"));
  add("planner.retry_backoff_ms", set(c.endpoint.retry_backoff_ms, "planner.retry_backoff_ms"));
  add("seeds.seed", set(c.seed, "seeds.seed"));
  add("generation.candidates", set(c.candidates, "generation.candidates"));
  add("generation.frames", set(c.frames, "generation.frames"));
  add("generation.fps", set(c.fps, "generation.fps"));
  add("generation.threads", set(c.threads, "generation.threads"));
  add("paths.posture", set(c.paths.posture, "paths.posture"));
  add("paths.encoders", set(c.paths.encoders, "paths.encoders"));
  add("paths.go", set(c.paths.go, "paths.go"));
  add("paths.extractors", set(c.paths.extractors, "paths.extractors"));
  return s;
}

}  // namespace

PipelineConfig parse_config(const std::string& ini_text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  std::istringstream in(ini_text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw DomainError(std::string("config: ") + e.what());
  }
  PipelineConfig c;
  const auto table = setters(c);
  for (const auto& [section, keys] : tree) {
    if (keys.empty()) throw DomainError("config: key " + section + " outside a section");
    for (const auto& [key, value] : keys) {
      const auto it = table.find(section + "." + key);
      if (it == table.end()) throw DomainError("config: unknown key " + section + "." + key);
      it->second(value.get_value<std::string>());
    }
  }
  for (auto* p : {&c.paths.posture, &c.paths.encoders, &c.paths.go, &c.paths.extractors})
    if (p->is_relative()) *p = base_dir / *p;
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& ini_file) {
  std::ifstream in(ini_file);
  if (!in) throw DomainError("config: cannot open " + ini_file.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), ini_file.parent_path().empty() ? "." : ini_file.parent_path());
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw NumericError("sha256: digest failed");
  static const char* const hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open " + path.string());
  std::stringstream bytes;
  bytes << in.rdbuf();
  return sha256_hex(bytes.str());
}

}  // namespace promo::pipeline
