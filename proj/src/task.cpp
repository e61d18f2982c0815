#include "lkmrl/task.hpp"

namespace lkmrl {

CrossingTask::CrossingTask(env::ScenarioConfig cfg, Role learner, const Opponent& opponent)
    : crossing_(cfg),
      learner_(learner),
      type_(opponent.type),
      opponent_(make_agent(opponent, other(learner), cfg)) {}

env::Obs CrossingTask::reset(std::uint64_t seed) {
  const env::State& s = crossing_.reset(type_, seed);
  opponent_->begin_episode(type_, seed);
  return env::encode_obs(s, crossing_.config());
}

Rng& CrossingTask::learner_rng() {
  return learner_ == Role::Car ? crossing_.car_rng() : crossing_.ped_rng();
}

TaskStep CrossingTask::step(int slot) {
  const env::State before = crossing_.state();
  const env::Obs obs = env::encode_obs(before, crossing_.config());
  const env::Action mine = env::action_from_slot(slot);
  env::Action a_car = mine;
  env::Action a_ped = mine;
  if (learner_ == Role::Car) {
    a_ped = opponent_->act(before, obs, crossing_.ped_rng());
  } else {
    a_car = opponent_->act(before, obs, crossing_.car_rng());
  }
  const env::StepResult r = crossing_.step(a_car, a_ped);
  opponent_->observe(before, a_car, a_ped, r);

  TaskStep out;
  out.obs = env::encode_obs(r.next, crossing_.config());
  out.reward = learner_ == Role::Car ? r.r_car : r.r_ped;
  out.done = r.event.terminal;
  out.event = r.event.kind;
  out.state = r.next;
  out.a_car = a_car;
  out.a_ped = a_ped;
  return out;
}

}  // namespace lkmrl
