#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lkmrl/cola.hpp"
#include "lkmrl/env.hpp"
#include "lkmrl/eval.hpp"
#include "lkmrl/levelk.hpp"
#include "lkmrl/train.hpp"

// JSON run configuration shared by all CLI subcommands. Every section is
// optional and merges over defaults; unknown keys are rejected. Paths are
// taken relative to the working directory.

namespace lkmrl::config {

struct OpponentSpec {
  env::PedType type = env::PedType::T1_Random;
  std::string checkpoint;  // empty: scripted level-0 rule
};

struct HierarchyConfig {
  Role agent = Role::Car;
  int level = 1;
  std::vector<OpponentSpec> opponents{{env::PedType::T1_Random, ""},
                                      {env::PedType::T2_Fast5, ""},
                                      {env::PedType::T3_Slow3, ""}};
  std::vector<double> meta_distribution;
};

struct FinetuneConfig {
  std::string base;
  long episodes = 1000;
  double lr = 1e-4;
};

struct PolicyConfig {
  std::string kind = "scripted";  // scripted | checkpoint | cola
  std::string checkpoint;         // policy, or COLA base
  std::string buffer;             // COLA only
  std::string label;
  int conjecturer_episodes = 200;  // inferred-belief COLA only
};

struct EvalConfig {
  PolicyConfig car;
  PolicyConfig ped;
  std::vector<env::PedType> ped_types{env::kAllPedTypes.begin(), env::kAllPedTypes.end()};
  Role subject = Role::Car;
  long episodes = 500;
};

struct CompareConfig {
  PolicyConfig a;
  PolicyConfig b;
};

struct FillBufferConfig {
  std::string base;
  std::vector<OpponentSpec> opponents{{env::PedType::T1_Random, ""},
                                      {env::PedType::T2_Fast5, ""},
                                      {env::PedType::T3_Slow3, ""}};
};

struct RunColaConfig {
  std::string base;
  std::string buffer;
  std::vector<env::PedType> ped_types{env::kAllPedTypes.begin(), env::kAllPedTypes.end()};
  long episodes = 30;
  int conjecturer_episodes = 200;
};

struct RunConfig {
  std::uint64_t seed = 0;
  env::ScenarioConfig scenario;
  train::TrainConfig train;
  cola::ColaConfig cola;
  HierarchyConfig hierarchy;
  FinetuneConfig finetune;
  EvalConfig eval;
  CompareConfig compare;
  FillBufferConfig fill_buffer;
  RunColaConfig run_cola;
};

nlohmann::json to_json(const RunConfig& c);
/// Throws ConfigError on unknown keys, wrong types or invalid values.
RunConfig from_json(const nlohmann::json& j);

struct Loaded {
  RunConfig config;
  bool from_manifest = false;  // the file was a RunManifest; its seed is in config
};

/// Reads a config file, or the config snapshot embedded in a RunManifest.
Loaded load(const std::filesystem::path& path);

/// Loads the referenced checkpoints and assembles the opponent set.
std::vector<Opponent> resolve_opponents(const std::vector<OpponentSpec>& specs);
levelk::HierarchySpec resolve_hierarchy(const HierarchyConfig& h);

/// Builds an evaluation agent; missing artifacts are ConfigErrors.
eval::AgentSpec resolve_policy(const PolicyConfig& p, const RunConfig& rc, std::string fallback_label);

}  // namespace lkmrl::config
