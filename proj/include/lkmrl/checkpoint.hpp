#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "lkmrl/net.hpp"
#include "lkmrl/role.hpp"

namespace lkmrl {

/// Provenance of one opponent a checkpoint was trained against.
struct OpponentRecord {
  Role role = Role::Pedestrian;
  int level = 0;
  std::string type;    // "T1".."T3" for pedestrians, "car" for the car
  std::string source;  // "scripted" or the opponent checkpoint's sha256

  bool operator==(const OpponentRecord&) const = default;
};

/// Indexes a policy as theta^k_{i,j}: agent i, level k, type j.
struct CheckpointMeta {
  Role agent = Role::Car;
  int level = 1;
  std::string type_label;
  std::vector<OpponentRecord> trained_vs;
  long episodes = 0;
  std::vector<double> lr_schedule;
  std::uint64_t seed = 0;
  std::string parent;  // sha256 of the checkpoint this was fine-tuned from

  bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
  net::Params actor;
  net::Params critic;
  CheckpointMeta meta;

  bool operator==(const Checkpoint&) const = default;
};

nlohmann::json to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

/// Canonical serialization; the file written by save_checkpoint is exactly
/// these bytes, so content_hash() equals the file's sha256.
std::string serialize(const Checkpoint& c);
std::string content_hash(const Checkpoint& c);

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);
std::string file_sha256(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace lkmrl
