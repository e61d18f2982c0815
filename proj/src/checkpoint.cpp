#include "lkmrl/checkpoint.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <sstream>

#include "lkmrl/errors.hpp"

namespace lkmrl {
namespace {

nlohmann::json params_json(const net::Params& p) {
  nlohmann::json shape;
  net::to_json(shape, p.shape);
  return {{"shape", shape}, {"params", p.values}};
}

net::Params params_from(const nlohmann::json& j) {
  net::Params p;
  net::from_json(j.at("shape"), p.shape);
  p.values = j.at("params").get<std::vector<double>>();
  if (p.values.size() != p.shape.param_count()) {
    throw ConfigError("checkpoint: parameter count does not match shape");
  }
  if (!net::all_finite(p.values)) throw ConfigError("checkpoint: non-finite parameters");
  return p;
}

}  // namespace

nlohmann::json to_json(const Checkpoint& c) {
  nlohmann::json vs = nlohmann::json::array();
  for (const OpponentRecord& o : c.meta.trained_vs) {
    vs.push_back({{"role", to_string(o.role)},
                  {"level", o.level},
                  {"type", o.type},
                  {"source", o.source}});
  }
  nlohmann::json j = params_json(c.actor);
  j["critic"] = params_json(c.critic);
  j["metadata"] = {
      {"agent", to_string(c.meta.agent)},
      {"level", c.meta.level},
      {"type", c.meta.type_label},
      {"trained_vs", vs},
      {"episodes", c.meta.episodes},
      {"lr_schedule", c.meta.lr_schedule},
      {"seed", c.meta.seed},
      {"parent", c.meta.parent},
  };
  return j;
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  try {
    Checkpoint c;
    c.actor = params_from(j);
    c.critic = params_from(j.at("critic"));
    const nlohmann::json& m = j.at("metadata");
    c.meta.agent = role_from_string(m.at("agent").get<std::string>());
    c.meta.level = m.at("level").get<int>();
    c.meta.type_label = m.value("type", "");
    for (const auto& o : m.at("trained_vs")) {
      c.meta.trained_vs.push_back({role_from_string(o.at("role").get<std::string>()),
                                   o.at("level").get<int>(), o.at("type").get<std::string>(),
                                   o.at("source").get<std::string>()});
    }
    c.meta.episodes = m.at("episodes").get<long>();
    c.meta.lr_schedule = m.at("lr_schedule").get<std::vector<double>>();
    c.meta.seed = m.at("seed").get<std::uint64_t>();
    c.meta.parent = m.value("parent", "");
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("checkpoint: malformed JSON: ") + e.what());
  }
}

std::string serialize(const Checkpoint& c) { return to_json(c).dump() + "\n"; }

std::string content_hash(const Checkpoint& c) { return sha256_hex(serialize(c)); }

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  write_file(path, serialize(c));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return checkpoint_from_json(j);
}

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string(), "write failed");
}

}  // namespace lkmrl
