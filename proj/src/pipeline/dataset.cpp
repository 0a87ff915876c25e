#include "promo/pipeline/dataset.hpp"

#include <charconv>
#include <fstream>

#include "promo/pipeline/synth.hpp"

namespace promo::pipeline {

namespace {

void append_float(std::string& out, float v) {
  if (!std::isfinite(v)) throw DomainError("dataset: non-finite value");
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, r.ptr);
}

template <class Range>
void append_floats(std::string& out, const Range& values) {
  out += '[';
  bool first = true;
  for (float v : values) {
    if (!first) out += ',';
    first = false;
    append_float(out, v);
  }
  out += ']';
}

template <std::size_t N>
std::array<float, N> float_array(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != N)
    throw DomainError(std::string("dataset: ") + what + " must hold exactly " + std::to_string(N) + " numbers");
  std::array<float, N> out{};
  for (std::size_t i = 0; i < N; ++i) {
    if (!j[i].is_number()) throw DomainError(std::string("dataset: ") + what + " holds a non-number");
    out[i] = j[i].get<float>();
  }
  return out;
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("dataset: cannot write " + path.string());
  return out;
}

/// Parsed non-empty lines; a meta line sets *meta and is not returned.
std::vector<nlohmann::json> read_rows(const std::filesystem::path& path, DatasetMeta* meta) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("dataset: cannot open " + path.string());
  std::vector<nlohmann::json> rows;
  std::string line;
  for (std::size_t number = 1; std::getline(in, line); ++number) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DomainError(path.string() + ":" + std::to_string(number) + ": " + e.what());
    }
    if (row.is_object() && row.size() == 1 && row.contains("meta")) {
      if (meta) *meta = DatasetMeta::from_json(row.at("meta"));
      continue;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

nlohmann::json DatasetMeta::to_json() const {
  nlohmann::json j = extra;
  j["kind"] = kind;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  return j;
}

DatasetMeta DatasetMeta::from_json(const nlohmann::json& j) {
  DatasetMeta m;
  m.kind = j.at("kind").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.extra = j;
  for (const char* key : {"kind", "seed", "config_hash"}) m.extra.erase(key);
  return m;
}

std::string pose_record_json(const posture::PosturePair& pair) {
  std::string out = "{\"pose\":";
  append_floats(out, pair.pose.values);
  out += ",\"script\":" + script::to_json(pair.script).dump() + "}";
  return out;
}

posture::PosturePair parse_pose_record(const nlohmann::json& row) {
  posture::PosturePair p;
  p.pose.values = float_array<motion::kPoseDim>(row.at("pose"), "pose");
  p.pose.validate();
  p.script = script::script_from_json(row.at("script"));
  p.script.validate();
  return p;
}

std::string motion_record_json(const MotionRecord& record, const nlohmann::json& extra) {
  std::string out = "{\"fps\":" + std::to_string(record.motion.fps) + ",\"frames\":[";
  for (std::size_t f = 0; f < record.motion.frames.size(); ++f) {
    if (f) out += ',';
    append_floats(out, record.motion.frames[f]);
  }
  nlohmann::json plan = nlohmann::json::array();
  for (const auto& s : record.plan) plan.push_back(script::to_json(s));
  out += "],\"plan\":" + plan.dump();
  for (const auto& [key, value] : extra.items()) {
    if (key == "fps" || key == "frames" || key == "plan") throw DomainError("motion record: reserved key " + key);
    out += "," + nlohmann::json(key).dump() + ":" + value.dump();
  }
  out += "}";
  return out;
}

MotionRecord parse_motion_record(const nlohmann::json& row) {
  MotionRecord r;
  r.motion.fps = row.at("fps").get<int>();
  const auto& frames = row.at("frames");
  if (!frames.is_array() || frames.size() != motion::kSequenceFrames)
    throw DomainError("motion record: expected exactly 64 frames");
  for (const auto& f : frames) r.motion.frames.push_back(float_array<motion::kFrameDim>(f, "frame"));
  r.motion.validate_model_length();
  for (const auto& s : row.at("plan")) {
    r.plan.push_back(script::script_from_json(s));
    r.plan.back().validate();
  }
  return r;
}

void write_pose_dataset(const std::filesystem::path& path, const std::vector<posture::PosturePair>& pairs,
                        const DatasetMeta& meta) {
  auto out = open_out(path);
  out << nlohmann::json{{"meta", meta.to_json()}}.dump() << '\n';
  for (const auto& p : pairs) out << pose_record_json(p) << '\n';
  if (!out) throw DomainError("dataset: cannot write " + path.string());
}

std::vector<posture::PosturePair> read_pose_dataset(const std::filesystem::path& path, DatasetMeta* meta) {
  std::vector<posture::PosturePair> pairs;
  for (const auto& row : read_rows(path, meta)) pairs.push_back(parse_pose_record(row));
  return pairs;
}

void write_motion_dataset(const std::filesystem::path& path, const std::vector<MotionRecord>& records,
                          const DatasetMeta& meta) {
  auto out = open_out(path);
  out << nlohmann::json{{"meta", meta.to_json()}}.dump() << '\n';
  for (const auto& r : records) out << motion_record_json(r) << '\n';
  if (!out) throw DomainError("dataset: cannot write " + path.string());
}

std::vector<MotionRecord> read_motion_dataset(const std::filesystem::path& path, DatasetMeta* meta) {
  std::vector<MotionRecord> records;
  for (const auto& row : read_rows(path, meta)) records.push_back(parse_motion_record(row));
  return records;
}

void write_synth_pose_dataset(const std::filesystem::path& path, std::size_t n, std::uint64_t seed,
                              const std::string& config_hash) {
  if (n < 1) throw DomainError("synth-data: n must be at least 1");
  write_pose_dataset(path, synth_pose_dataset(n, seed), {"poses", seed, config_hash, {{"count", n}}});
}

void write_synth_motion_dataset(const std::filesystem::path& path, std::size_t n, std::uint64_t seed,
                                const std::string& config_hash, std::size_t keyposes) {
  if (n < 1) throw DomainError("synth-data: n must be at least 1");
  std::vector<MotionRecord> records;
  for (auto& p : synth_motion_text_dataset(n, seed, keyposes)) records.push_back({std::move(p.motion), std::move(p.text)});
  write_motion_dataset(path, records, {"motions", seed, config_hash, {{"count", n}, {"keyposes", keyposes}}});
}

}  // namespace promo::pipeline
