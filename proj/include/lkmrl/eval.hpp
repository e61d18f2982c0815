#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "lkmrl/agents.hpp"
#include "lkmrl/checkpoint.hpp"
#include "lkmrl/cola.hpp"
#include "lkmrl/env.hpp"
#include "lkmrl/stats.hpp"

namespace lkmrl::eval {

/// What plays one side of an evaluation episode.
struct AgentSpec {
  enum class Kind { Scripted, Checkpoint, Cola };

  Kind kind = Kind::Scripted;
  std::shared_ptr<const Checkpoint> checkpoint;  // policy, or COLA base
  std::shared_ptr<const cola::GradientBuffer> buffer;
  cola::ColaConfig cola;
  std::shared_ptr<const cola::TypeConjecturer> conjecturer;
  std::string label = "scripted";

  static AgentSpec scripted(std::string label = "scripted");
  static AgentSpec from_checkpoint(std::shared_ptr<const Checkpoint> c, std::string label);
  static AgentSpec cola_policy(std::shared_ptr<const Checkpoint> base,
                               std::shared_ptr<const cola::GradientBuffer> buffer,
                               cola::ColaConfig cc, std::string label,
                               std::shared_ptr<const cola::TypeConjecturer> conjecturer = nullptr);

  std::unique_ptr<Agent> make(Role role, const env::ScenarioConfig& cfg) const;
};

struct EvalSpec {
  AgentSpec car;
  AgentSpec ped;
  /// Episode e (1-based) faces ped_types[(e - 1) % size].
  std::vector<env::PedType> ped_types{env::kAllPedTypes.begin(), env::kAllPedTypes.end()};
  Role subject = Role::Car;  // whose rewards and arrivals are summarized
  long episodes = 500;
  std::uint64_t seed = 0;    // episode e uses seed + e
};

struct StepStat {
  double mean = 0.0;
  double var = 0.0;
  long count = 0;  // episodes still running at this step
};

struct MetricsSummary {
  std::string run_id;
  long episodes = 0;
  double reward_mean = 0.0;
  double reward_var = 0.0;
  long collisions = 0;
  long arrivals = 0;  // car arrivals
  long timeouts = 0;
  double collision_rate = 0.0;
  double arrival_rate = 0.0;
  double timeout_rate = 0.0;
  double mean_tt_dest = 0.0;  // subject's steps to destination, arrivals only
  long subject_arrivals = 0;
  /// Index i holds speeds after step i + 1.
  std::vector<StepStat> car_speed;
  std::vector<StepStat> ped_speed;

  std::vector<double> episode_rewards;
  std::vector<double> episode_collisions;  // 0/1, paired-test friendly
  std::vector<int> episode_steps;
  std::vector<env::PedType> episode_types;
};

/// Pure: runs the episodes and aggregates; writes nothing.
MetricsSummary evaluate(const env::ScenarioConfig& cfg, const EvalSpec& spec);

struct PairedComparison {
  MetricsSummary a;
  MetricsSummary b;
  stats::PairedInterval reward;     // a - b
  stats::PairedInterval collision;  // a - b collision indicators
};

/// Both policies drive the car on identical seeds and type sequences.
PairedComparison compare(const env::ScenarioConfig& cfg, const EvalSpec& base,
                         const AgentSpec& car_a, const AgentSpec& car_b);

/// Max |mean_a - mean_b| over steps where every episode of both runs is
/// still going.
double profile_gap(const std::vector<StepStat>& a, long episodes_a,
                   const std::vector<StepStat>& b, long episodes_b);

/// Columns: run_id, episodes, reward_mean, reward_var, collision_rate, mean_tt_dest.
void write_metrics_csv(const std::vector<MetricsSummary>& rows, const std::filesystem::path& path);
void write_metrics_csv(const MetricsSummary& m, const std::filesystem::path& path);
/// Columns: step, agent, speed_mean, speed_var; rows by step, car before pedestrian.
void write_speed_csv(const MetricsSummary& m, const std::filesystem::path& path);
void write_paired_csv(const PairedComparison& c, const std::filesystem::path& path);

struct MetricsRow {
  std::string run_id;
  long episodes = 0;
  double reward_mean = 0.0;
  double reward_var = 0.0;
  double collision_rate = 0.0;
  double mean_tt_dest = 0.0;
};
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

}  // namespace lkmrl::eval
