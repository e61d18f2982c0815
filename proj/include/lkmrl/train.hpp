#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "lkmrl/agents.hpp"
#include "lkmrl/checkpoint.hpp"
#include "lkmrl/env.hpp"
#include "lkmrl/net.hpp"
#include "lkmrl/task.hpp"

namespace lkmrl::train {

struct TrajectoryStep {
  env::State state;  // before the step
  env::Obs obs{};
  int slot = 0;  // learner's action slot
  env::Action a_car = env::Action::Cruise;
  env::Action a_ped = env::Action::Cruise;
  double logprob = 0.0;
  double reward = 0.0;
};

/// Episode outcome: Collision, CarArrived or Timeout (any other end).
struct Trajectory {
  std::vector<TrajectoryStep> steps;
  env::EventKind outcome = env::EventKind::Timeout;
  double total_return = 0.0;
  env::PedType ped_type = env::PedType::T1_Random;
  std::uint64_t seed = 0;

  std::size_t size() const { return steps.size(); }
  bool collided() const { return outcome == env::EventKind::Collision; }
};

/// Reduces the last step's event to an episode outcome.
env::EventKind outcome_of(env::EventKind last_event);

/// Runs `actor` (sampled from the task's learner stream) to termination.
Trajectory collect_episode(Task& task, const net::Params& actor, std::uint64_t seed,
                           int max_steps = 1 << 20);

Trajectory collect_episode(const env::ScenarioConfig& cfg, Role learner,
                           const net::Params& actor, const Opponent& opponent,
                           std::uint64_t seed);

struct ReturnsAdvantages {
  std::vector<double> returns;
  std::vector<double> advantages;
};

/// G_t by backward recursion; A_t = G_t - V(obs_t).
ReturnsAdvantages returns_and_advantages(const Trajectory& tau, const net::Params& critic,
                                         double gamma);

/// Single-episode estimator sum_t [A_t grad ln pi(a_t|s_t) + beta grad H].
/// With a zero critic and gamma = 1 this is the reward-to-go REINFORCE
/// estimator of grad E[R(tau)].
net::Grad policy_gradient(const Trajectory& tau, const net::Params& actor,
                          const net::Params& critic, double gamma, double beta);

struct UpdateLosses {
  double policy_objective = 0.0;  // mean A_t ln pi(a_t|s_t)
  double value_loss = 0.0;        // mean (V - G)^2 before the update
  double mean_entropy = 0.0;
  std::size_t steps = 0;
};

/// One synchronous actor-critic update over the batch, averaged per step.
UpdateLosses actor_critic_update(std::span<const Trajectory> batch, net::Params& actor,
                                 net::Params& critic, net::AdamState& actor_adam,
                                 net::AdamState& critic_adam, double lr, double beta,
                                 double gamma, double critic_lr_scale = 1.0);

struct TrainConfig {
  Role learner = Role::Car;
  int level = 1;
  std::vector<Opponent> opponents;        // one per opponent type j'
  std::vector<double> opponent_weights;   // empty = uniform
  std::vector<double> lr_stages{1e-4, 1e-5, 1e-6};
  int batch_size = 8;
  double gamma = 0.99;
  double entropy_coef = 0.01;
  double critic_lr_scale = 1.0;
  std::uint64_t seed = 0;
  int convergence_window = 200;
  double convergence_threshold = 0.01;
  long min_episodes_per_stage = 0;  // 0 = two convergence windows
  long max_episodes_per_stage = 20000;

  /// Throws ConfigError on violated invariants (does not look at opponents).
  void validate() const;
};

/// Serializes everything except `opponents`.
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpisodeStat {
  long episode = 0;
  env::PedType ped_type = env::PedType::T1_Random;
  double reward = 0.0;
  int steps = 0;
  bool collision = false;
  int lr_stage = 0;
  double moving_avg = 0.0;
};

struct TrainStats {
  std::vector<EpisodeStat> episodes;
  std::vector<UpdateLosses> updates;
  std::vector<long> stage_starts;  // first episode index of each visited stage
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainStats stats;
};

/// Sequential actor-critic trainer over a set of learner tasks, one per
/// opponent type. Gradient application is a single reducer, so results only
/// depend on the per-episode seeds.
class Trainer {
 public:
  Trainer(std::vector<std::unique_ptr<Task>> tasks, std::vector<env::PedType> labels,
          const TrainConfig& tc, net::Params actor, net::Params critic);

  /// Runs episodes at `lr` until the moving-average reward stabilizes (when
  /// `until_converged`) or `max_episodes` have run.
  void run_stage(int stage_index, double lr, long max_episodes, bool until_converged);

  const net::Params& actor() const { return actor_; }
  const net::Params& critic() const { return critic_; }
  const TrainStats& stats() const { return stats_; }
  long episodes() const { return episode_; }

 private:
  std::size_t pick_task();
  void flush(double lr);
  bool converged(long stage_begin) const;

  std::vector<std::unique_ptr<Task>> tasks_;
  std::vector<env::PedType> labels_;
  std::vector<double> cdf_;
  TrainConfig tc_;
  net::Params actor_;
  net::Params critic_;
  net::AdamState actor_adam_;
  net::AdamState critic_adam_;
  Rng picker_;
  std::uint64_t episode_seed_base_;
  long episode_ = 0;
  std::vector<Trajectory> batch_;
  std::vector<double> rewards_;
  double reward_window_sum_ = 0.0;
  TrainStats stats_;
  int stage_ = 0;
};

/// Staged actor-critic training of a crossing learner against `tc.opponents`.
TrainResult rl_base(const env::ScenarioConfig& cfg, const TrainConfig& tc);

/// Same loop over arbitrary tasks (all with the given actor shape).
TrainResult rl_base_on(std::vector<std::unique_ptr<Task>> tasks,
                       std::vector<env::PedType> labels, const TrainConfig& tc,
                       const net::NetShape& actor_shape);

/// CSV columns: episode, ped_type, reward, steps, collision, lr_stage.
void write_train_stats_csv(const TrainStats& stats, const std::filesystem::path& path);

}  // namespace lkmrl::train
