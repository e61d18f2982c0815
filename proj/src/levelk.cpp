#include "lkmrl/levelk.hpp"

#include <cmath>

#include "lkmrl/errors.hpp"

namespace lkmrl::levelk {

void HierarchySpec::validate() const {
  if (level < 1 || level > kMaxLevel) {
    throw ConfigError("hierarchy: level must be in [1, " + std::to_string(kMaxLevel) + "], got " +
                      std::to_string(level));
  }
  if (opponents.empty()) throw ConfigError("hierarchy: no opponents");
  for (const Opponent& o : opponents) {
    if (o.level() != level - 1) {
      throw ConfigError("hierarchy: a level-" + std::to_string(level) +
                        " learner needs level-" + std::to_string(level - 1) +
                        " opponents, got level " + std::to_string(o.level()));
    }
    if (o.policy && o.policy->meta.agent != other(agent)) {
      throw ConfigError("hierarchy: opponent checkpoint plays the learner's own role");
    }
  }
  if (!meta_distribution.empty()) {
    if (meta_distribution.size() != opponents.size()) {
      throw ConfigError("hierarchy: meta distribution needs one entry per opponent");
    }
    double sum = 0.0;
    for (double p : meta_distribution) {
      if (!(p >= 0.0)) throw ConfigError("hierarchy: meta distribution entries must be >= 0");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("hierarchy: meta distribution must sum to 1");
  }
}

HierarchySpec mode1_car_spec() {
  HierarchySpec s;
  s.agent = Role::Car;
  s.level = 1;
  for (env::PedType t : env::kAllPedTypes) s.opponents.push_back(Opponent{t, nullptr, ""});
  return s;
}

HierarchySpec level1_pedestrian_spec() {
  HierarchySpec s;
  s.agent = Role::Pedestrian;
  s.level = 1;
  s.opponents.push_back(Opponent{env::PedType::T1_Random, nullptr, ""});
  return s;
}

HierarchySpec level2_car_spec(std::shared_ptr<const Checkpoint> level1_ped, std::string source) {
  HierarchySpec s;
  s.agent = Role::Car;
  s.level = 2;
  env::PedType t = env::PedType::T1_Random;
  if (level1_ped && !level1_ped->meta.type_label.empty()) {
    t = env::ped_type_from_string(level1_ped->meta.type_label);
  }
  s.opponents.push_back(Opponent{t, std::move(level1_ped), std::move(source)});
  return s;
}

train::TrainResult train_level_k(const env::ScenarioConfig& cfg, const HierarchySpec& spec,
                                 train::TrainConfig tc) {
  spec.validate();
  tc.learner = spec.agent;
  tc.level = spec.level;
  tc.opponents = spec.opponents;
  tc.opponent_weights = spec.meta_distribution;
  return train::rl_base(cfg, tc);
}

train::TrainResult finetune(const env::ScenarioConfig& cfg, const Checkpoint& base,
                            const HierarchySpec& spec, long episodes, double lr,
                            train::TrainConfig tc) {
  if (episodes <= 0) throw ConfigError("finetune: episode count must be positive");
  if (!(lr > 0.0)) throw ConfigError("finetune: learning rate must be positive");
  spec.validate();
  if (base.meta.agent != spec.agent) throw ConfigError("finetune: base checkpoint plays another role");
  if (spec.level != base.meta.level + 1) {
    throw ConfigError("finetune: a level-" + std::to_string(base.meta.level) +
                      " base fine-tunes into level " + std::to_string(base.meta.level + 1) +
                      ", spec asks for level " + std::to_string(spec.level));
  }
  cfg.validate();
  tc.learner = spec.agent;
  tc.level = spec.level;
  tc.opponents = spec.opponents;
  tc.opponent_weights = spec.meta_distribution;
  tc.lr_stages = {lr};
  tc.validate();

  std::vector<std::unique_ptr<Task>> tasks;
  std::vector<env::PedType> labels;
  std::vector<OpponentRecord> vs;
  for (const Opponent& o : spec.opponents) {
    tasks.push_back(std::make_unique<CrossingTask>(cfg, spec.agent, o));
    labels.push_back(o.type);
    vs.push_back(record_of(o, other(spec.agent)));
  }
  train::Trainer trainer(std::move(tasks), std::move(labels), tc, base.actor, base.critic);
  trainer.run_stage(0, lr, episodes, false);

  train::TrainResult out;
  out.stats = trainer.stats();
  Checkpoint& c = out.checkpoint;
  c.actor = trainer.actor();
  c.critic = trainer.critic();
  c.meta = base.meta;
  c.meta.level = spec.level;
  c.meta.trained_vs = std::move(vs);
  c.meta.episodes = base.meta.episodes + trainer.episodes();
  c.meta.lr_schedule.push_back(lr);
  c.meta.seed = tc.seed;
  c.meta.parent = content_hash(base);
  return out;
}

double beauty_contest_check(int k) {
  if (k < 0) throw UsageError("beauty_contest_check: k must be >= 0");
  if (k == 0) return 50.0;  // mean of a uniform random pick
  return 0.5 * beauty_contest_check(k - 1);
}

nlohmann::json hierarchy_manifest(const std::vector<ManifestEntry>& entries) {
  nlohmann::json list = nlohmann::json::array();
  for (const ManifestEntry& e : entries) {
    list.push_back({{"role", to_string(e.role)},
                    {"level", e.level},
                    {"type", e.type},
                    {"path", e.path},
                    {"sha256", e.sha256}});
  }
  return {{"checkpoints", list}};
}

ManifestEntry manifest_entry(const Checkpoint& c, const std::filesystem::path& path) {
  return ManifestEntry{c.meta.agent, c.meta.level, c.meta.type_label, path.string(),
                       file_sha256(path)};
}

}  // namespace lkmrl::levelk
