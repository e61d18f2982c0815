#pragma once

#include <memory>

#include "lkmrl/agents.hpp"
#include "lkmrl/env.hpp"

namespace lkmrl {

struct TaskStep {
  env::Obs obs{};  // observation after the step
  double reward = 0.0;
  bool done = false;
  env::EventKind event = env::EventKind::None;
  env::State state{};  // state after the step
  env::Action a_car = env::Action::Cruise;
  env::Action a_ped = env::Action::Cruise;
};

/// Episodic environment as seen by a single learner. The crossing wraps a
/// frozen opponent; tests plug in small enumerable MDPs.
class Task {
 public:
  virtual ~Task() = default;

  virtual int action_count() const = 0;
  virtual env::Obs reset(std::uint64_t seed) = 0;
  virtual TaskStep step(int slot) = 0;
  /// Stream the learner samples its own actions from.
  virtual Rng& learner_rng() = 0;
  /// State before the next step (zeros for non-crossing tasks).
  virtual env::State state() const { return {}; }
  virtual env::PedType ped_type() const { return env::PedType::T1_Random; }
};

class CrossingTask final : public Task {
 public:
  CrossingTask(env::ScenarioConfig cfg, Role learner, const Opponent& opponent);

  int action_count() const override { return static_cast<int>(env::kActionCount); }
  env::Obs reset(std::uint64_t seed) override;
  TaskStep step(int slot) override;
  Rng& learner_rng() override;
  env::State state() const override { return crossing_.state(); }
  env::PedType ped_type() const override { return type_; }

  Role learner() const { return learner_; }

 private:
  env::Crossing crossing_;
  Role learner_;
  env::PedType type_;
  std::unique_ptr<Agent> opponent_;
};

}  // namespace lkmrl
