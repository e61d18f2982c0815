#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "lkmrl/agents.hpp"
#include "lkmrl/checkpoint.hpp"
#include "lkmrl/env.hpp"
#include "lkmrl/train.hpp"

namespace lkmrl::levelk {

/// Deepest level the trainer accepts.
inline constexpr int kMaxLevel = 2;

/// A level-k learner and the level-(k-1) opponents it best-responds to.
struct HierarchySpec {
  Role agent = Role::Car;
  int level = 1;
  std::vector<Opponent> opponents;
  std::vector<double> meta_distribution;  // over opponents; empty = uniform

  /// Throws ConfigError: level outside [1, kMaxLevel], an opponent that is not
  /// level k-1 or plays the wrong role, or p off the simplex.
  void validate() const;
};

/// Mode 1: level-1 car against the three scripted pedestrian types.
HierarchySpec mode1_car_spec();
/// Mode 2, first half: level-1 pedestrian against the scripted level-0 car.
HierarchySpec level1_pedestrian_spec();
/// Mode 2, second half: level-2 car against a trained level-1 pedestrian.
HierarchySpec level2_car_spec(std::shared_ptr<const Checkpoint> level1_ped, std::string source = "");

/// Best response to the frozen opponents via rl_base; `tc`'s role, level,
/// opponents and weights are overridden from `spec`.
train::TrainResult train_level_k(const env::ScenarioConfig& cfg, const HierarchySpec& spec,
                                 train::TrainConfig tc);

/// Continues actor-critic updates from `base` for exactly `episodes` episodes
/// at a fixed `lr`; the result is one level above `base`. Zero episodes is a
/// ConfigError.
train::TrainResult finetune(const env::ScenarioConfig& cfg, const Checkpoint& base,
                            const HierarchySpec& spec, long episodes, double lr,
                            train::TrainConfig tc);

/// Keynesian beauty contest (pick half the average): the level-0 mean pick is
/// 50 and each level best-responds to the one below.
double beauty_contest_check(int k);

struct ManifestEntry {
  Role role = Role::Car;
  int level = 0;
  std::string type;
  std::string path;
  std::string sha256;
};

/// Checkpoints of a hierarchy by (role, level, type) with file hashes.
nlohmann::json hierarchy_manifest(const std::vector<ManifestEntry>& entries);
ManifestEntry manifest_entry(const Checkpoint& c, const std::filesystem::path& path);

}  // namespace lkmrl::levelk
