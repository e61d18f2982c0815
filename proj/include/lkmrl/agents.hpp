#pragma once

#include <memory>
#include <string>

#include "lkmrl/checkpoint.hpp"
#include "lkmrl/env.hpp"
#include "lkmrl/net.hpp"
#include "lkmrl/role.hpp"

namespace lkmrl {

/// One side of a crossing episode. `act` draws randomness only from the
/// stream it is handed (the agent's own role stream).
class Agent {
 public:
  virtual ~Agent() = default;

  virtual void begin_episode(env::PedType /*type*/, std::uint64_t /*seed*/) {}
  virtual env::Action act(const env::State& s, const env::Obs& obs, Rng& rng) = 0;
  virtual void observe(const env::State& /*before*/, env::Action /*a_car*/,
                       env::Action /*a_ped*/, const env::StepResult& /*result*/) {}
};

/// Level-0 pedestrian; behavior follows the episode's pedestrian type.
class ScriptedPedAgent final : public Agent {
 public:
  void begin_episode(env::PedType type, std::uint64_t) override { type_ = type; }
  env::Action act(const env::State& s, const env::Obs&, Rng& rng) override {
    return env::level0_ped_action(type_, s, rng);
  }

 private:
  env::PedType type_ = env::PedType::T1_Random;
};

class ScriptedCarAgent final : public Agent {
 public:
  explicit ScriptedCarAgent(env::ScenarioConfig cfg) : cfg_(cfg) {}
  env::Action act(const env::State& s, const env::Obs&, Rng&) override {
    return env::level0_car_action(s, cfg_);
  }

 private:
  env::ScenarioConfig cfg_;
};

/// Frozen stochastic policy (actions are sampled, not argmax).
class PolicyAgent final : public Agent {
 public:
  explicit PolicyAgent(std::shared_ptr<const net::Params> actor) : actor_(std::move(actor)) {}
  env::Action act(const env::State&, const env::Obs& obs, Rng& rng) override {
    const net::Sampled s = net::sample_action(net::forward_actor(*actor_, obs), rng);
    return env::action_from_slot(s.slot);
  }

 private:
  std::shared_ptr<const net::Params> actor_;
};

/// An opponent of a learner for one pedestrian type j'. A null checkpoint
/// means the scripted level-0 rule of the opponent's role.
struct Opponent {
  env::PedType type = env::PedType::T1_Random;
  std::shared_ptr<const Checkpoint> policy;
  std::string source;  // path the checkpoint was loaded from, if any

  bool scripted() const { return policy == nullptr; }
  int level() const { return policy ? policy->meta.level : 0; }
};

/// Builds the acting agent for `opponent` playing `role`.
std::unique_ptr<Agent> make_agent(const Opponent& opponent, Role role,
                                  const env::ScenarioConfig& cfg);

OpponentRecord record_of(const Opponent& opponent, Role role);

}  // namespace lkmrl
