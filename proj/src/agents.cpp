#include "lkmrl/agents.hpp"

namespace lkmrl {

std::unique_ptr<Agent> make_agent(const Opponent& opponent, Role role,
                                  const env::ScenarioConfig& cfg) {
  if (opponent.policy) {
    if (opponent.policy->meta.agent != role) {
      throw ConfigError("opponent checkpoint is a " +
                        std::string(to_string(opponent.policy->meta.agent)) +
                        " policy, expected " + std::string(to_string(role)));
    }
    return std::make_unique<PolicyAgent>(
        std::shared_ptr<const net::Params>(opponent.policy, &opponent.policy->actor));
  }
  if (role == Role::Car) return std::make_unique<ScriptedCarAgent>(cfg);
  return std::make_unique<ScriptedPedAgent>();
}

OpponentRecord record_of(const Opponent& opponent, Role role) {
  OpponentRecord r;
  r.role = role;
  r.level = opponent.level();
  r.type = role == Role::Car ? "car" : std::string(env::to_string(opponent.type));
  r.source = opponent.policy ? content_hash(*opponent.policy) : "scripted";
  return r;
}

}  // namespace lkmrl
