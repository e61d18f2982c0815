#include "lkmrl/train.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "lkmrl/csv.hpp"
#include "lkmrl/errors.hpp"

namespace lkmrl::train {

env::EventKind outcome_of(env::EventKind last_event) {
  if (last_event == env::EventKind::Collision || last_event == env::EventKind::CarArrived) {
    return last_event;
  }
  return env::EventKind::Timeout;
}

Trajectory collect_episode(Task& task, const net::Params& actor, std::uint64_t seed,
                           int max_steps) {
  Trajectory tau;
  tau.seed = seed;
  env::Obs obs = task.reset(seed);
  tau.ped_type = task.ped_type();
  env::EventKind last = env::EventKind::Timeout;
  for (int t = 0; t < max_steps; ++t) {
    TrajectoryStep rec;
    rec.state = task.state();
    rec.obs = obs;
    const net::Sampled s = net::sample_action(net::forward_actor(actor, obs), task.learner_rng());
    rec.slot = s.slot;
    rec.logprob = s.logprob;
    const TaskStep r = task.step(s.slot);
    rec.a_car = r.a_car;
    rec.a_ped = r.a_ped;
    rec.reward = r.reward;
    tau.total_return += r.reward;
    tau.steps.push_back(rec);
    obs = r.obs;
    last = r.event;
    if (r.done) break;
  }
  tau.outcome = outcome_of(last);
  return tau;
}

Trajectory collect_episode(const env::ScenarioConfig& cfg, Role learner,
                           const net::Params& actor, const Opponent& opponent,
                           std::uint64_t seed) {
  CrossingTask task(cfg, learner, opponent);
  return collect_episode(task, actor, seed);
}

ReturnsAdvantages returns_and_advantages(const Trajectory& tau, const net::Params& critic,
                                         double gamma) {
  const std::size_t n = tau.steps.size();
  ReturnsAdvantages out;
  out.returns.resize(n);
  out.advantages.resize(n);
  double g = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    g = tau.steps[i].reward + gamma * g;
    out.returns[i] = g;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.advantages[i] = out.returns[i] - net::forward_critic(critic, tau.steps[i].obs);
  }
  return out;
}

net::Grad policy_gradient(const Trajectory& tau, const net::Params& actor,
                          const net::Params& critic, double gamma, double beta) {
  net::Grad g = net::Grad::zeros(actor.values.size());
  const ReturnsAdvantages ra = returns_and_advantages(tau, critic, gamma);
  for (std::size_t i = 0; i < tau.steps.size(); ++i) {
    net::accumulate_logprob_grad(actor, tau.steps[i].obs, tau.steps[i].slot,
                                 ra.advantages[i], g);
    net::accumulate_entropy_grad(actor, tau.steps[i].obs, beta, g);
  }
  return g;
}

UpdateLosses actor_critic_update(std::span<const Trajectory> batch, net::Params& actor,
                                 net::Params& critic, net::AdamState& actor_adam,
                                 net::AdamState& critic_adam, double lr, double beta,
                                 double gamma, double critic_lr_scale) {
  if (batch.empty()) throw UsageError("actor_critic_update: empty batch");
  UpdateLosses losses;
  for (const Trajectory& tau : batch) losses.steps += tau.steps.size();
  if (losses.steps == 0) return losses;
  const double inv_n = 1.0 / static_cast<double>(losses.steps);

  net::Grad g_actor = net::Grad::zeros(actor.values.size());
  net::Grad g_critic = net::Grad::zeros(critic.values.size());
  for (const Trajectory& tau : batch) {
    const ReturnsAdvantages ra = returns_and_advantages(tau, critic, gamma);
    for (std::size_t i = 0; i < tau.steps.size(); ++i) {
      const TrajectoryStep& st = tau.steps[i];
      const double adv = ra.advantages[i];
      const net::ActionDist d = net::forward_actor(actor, st.obs);
      losses.policy_objective += adv * d.log_probs[st.slot] * inv_n;
      losses.mean_entropy += net::entropy(d) * inv_n;
      losses.value_loss += adv * adv * inv_n;
      net::accumulate_logprob_grad(actor, st.obs, st.slot, adv * inv_n, g_actor);
      net::accumulate_entropy_grad(actor, st.obs, beta * inv_n, g_actor);
      // Descent on mean (V - G)^2 == ascent along 2 (G - V) grad V.
      net::accumulate_value_grad(critic, st.obs, 2.0 * adv * inv_n, g_critic);
    }
  }
  net::adam_step(actor, g_actor, actor_adam, lr);
  net::adam_step(critic, g_critic, critic_adam, lr * critic_lr_scale);
  return losses;
}

void TrainConfig::validate() const {
  if (lr_stages.empty()) throw ConfigError("train: lr_stages must be non-empty");
  for (std::size_t i = 0; i < lr_stages.size(); ++i) {
    if (!(lr_stages[i] > 0.0)) throw ConfigError("train: learning rates must be positive");
    if (i > 0 && !(lr_stages[i] < lr_stages[i - 1])) {
      throw ConfigError("train: lr_stages must be strictly decreasing");
    }
  }
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("train: gamma must be in (0, 1]");
  if (!(entropy_coef >= 0.0)) throw ConfigError("train: entropy_coef must be >= 0");
  if (!(critic_lr_scale >= 0.0)) throw ConfigError("train: critic_lr_scale must be >= 0");
  if (convergence_window < 1) throw ConfigError("train: convergence_window must be >= 1");
  if (!(convergence_threshold >= 0.0)) {
    throw ConfigError("train: convergence_threshold must be >= 0");
  }
  if (max_episodes_per_stage < 1) throw ConfigError("train: max_episodes_per_stage must be >= 1");
  if (min_episodes_per_stage < 0) throw ConfigError("train: min_episodes_per_stage must be >= 0");
  if (level < 1) throw ConfigError("train: level must be >= 1");
  if (!opponent_weights.empty()) {
    double sum = 0.0;
    for (double w : opponent_weights) {
      if (!(w >= 0.0)) throw ConfigError("train: opponent weights must be >= 0");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("train: opponent weights must sum to 1");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"learner", to_string(c.learner)},
      {"level", c.level},
      {"lr_stages", c.lr_stages},
      {"batch_size", c.batch_size},
      {"gamma", c.gamma},
      {"entropy_coef", c.entropy_coef},
      {"critic_lr_scale", c.critic_lr_scale},
      {"seed", c.seed},
      {"convergence_window", c.convergence_window},
      {"convergence_threshold", c.convergence_threshold},
      {"min_episodes_per_stage", c.min_episodes_per_stage},
      {"max_episodes_per_stage", c.max_episodes_per_stage},
  };
  if (!c.opponent_weights.empty()) j["opponent_weights"] = c.opponent_weights;
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw ConfigError("train: expected an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "learner") c.learner = role_from_string(v.get<std::string>());
      else if (key == "level") c.level = v.get<int>();
      else if (key == "lr_stages") c.lr_stages = v.get<std::vector<double>>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "gamma") c.gamma = v.get<double>();
      else if (key == "entropy_coef") c.entropy_coef = v.get<double>();
      else if (key == "critic_lr_scale") c.critic_lr_scale = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "convergence_window") c.convergence_window = v.get<int>();
      else if (key == "convergence_threshold") c.convergence_threshold = v.get<double>();
      else if (key == "min_episodes_per_stage") c.min_episodes_per_stage = v.get<long>();
      else if (key == "max_episodes_per_stage") c.max_episodes_per_stage = v.get<long>();
      else if (key == "opponent_weights") c.opponent_weights = v.get<std::vector<double>>();
      else throw ConfigError("train: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
}

Trainer::Trainer(std::vector<std::unique_ptr<Task>> tasks, std::vector<env::PedType> labels,
                 const TrainConfig& tc, net::Params actor, net::Params critic)
    : tasks_(std::move(tasks)),
      labels_(std::move(labels)),
      tc_(tc),
      actor_(std::move(actor)),
      critic_(std::move(critic)),
      actor_adam_(net::AdamState::zeros(actor_.values.size())),
      critic_adam_(net::AdamState::zeros(critic_.values.size())),
      picker_(derive_seed(tc.seed, Stream::Trainer)),
      episode_seed_base_(derive_seed(tc.seed, Stream::Episode)) {
  tc_.validate();
  if (tasks_.empty()) throw ConfigError("train: no opponents given");
  if (labels_.size() != tasks_.size()) throw UsageError("train: one label per task required");
  std::vector<double> w = tc_.opponent_weights;
  if (w.empty()) w.assign(tasks_.size(), 1.0 / static_cast<double>(tasks_.size()));
  if (w.size() != tasks_.size()) {
    throw ConfigError("train: opponent_weights must have one entry per opponent");
  }
  double cum = 0.0;
  for (double x : w) cdf_.push_back(cum += x);
}

std::size_t Trainer::pick_task() {
  if (tasks_.size() == 1) return 0;
  const double u = picker_.uniform() * cdf_.back();
  for (std::size_t i = 0; i < cdf_.size(); ++i) {
    if (u < cdf_[i]) return i;
  }
  return cdf_.size() - 1;
}

void Trainer::flush(double lr) {
  if (batch_.empty()) return;
  stats_.updates.push_back(actor_critic_update(batch_, actor_, critic_, actor_adam_,
                                               critic_adam_, lr, tc_.entropy_coef, tc_.gamma,
                                               tc_.critic_lr_scale));
  batch_.clear();
}

bool Trainer::converged(long stage_begin) const {
  const long w = tc_.convergence_window;
  const long n = episode_ - stage_begin;
  const long min_n = tc_.min_episodes_per_stage > 0 ? tc_.min_episodes_per_stage : 2 * w;
  if (n < std::max(min_n, 2 * w)) return false;
  double recent = 0.0, before = 0.0;
  for (long i = episode_ - w; i < episode_; ++i) recent += rewards_[i];
  for (long i = episode_ - 2 * w; i < episode_ - w; ++i) before += rewards_[i];
  recent /= static_cast<double>(w);
  before /= static_cast<double>(w);
  return std::abs(recent - before) < tc_.convergence_threshold * std::abs(before);
}

void Trainer::run_stage(int stage_index, double lr, long max_episodes, bool until_converged) {
  stage_ = stage_index;
  const long stage_begin = episode_;
  stats_.stage_starts.push_back(stage_begin);
  const long w = tc_.convergence_window;
  while (episode_ - stage_begin < max_episodes) {
    const std::size_t k = pick_task();
    const std::uint64_t seed = derive_seed(episode_seed_base_, static_cast<std::uint64_t>(episode_));
    Trajectory tau = collect_episode(*tasks_[k], actor_, seed);
    tau.ped_type = labels_[k];

    rewards_.push_back(tau.total_return);
    reward_window_sum_ += tau.total_return;
    if (static_cast<long>(rewards_.size()) > w) reward_window_sum_ -= rewards_[rewards_.size() - 1 - w];
    const long in_window = std::min<long>(w, static_cast<long>(rewards_.size()));

    EpisodeStat es;
    es.episode = episode_;
    es.ped_type = tau.ped_type;
    es.reward = tau.total_return;
    es.steps = static_cast<int>(tau.steps.size());
    es.collision = tau.collided();
    es.lr_stage = stage_index;
    es.moving_avg = reward_window_sum_ / static_cast<double>(in_window);
    stats_.episodes.push_back(es);

    batch_.push_back(std::move(tau));
    ++episode_;
    if (static_cast<int>(batch_.size()) >= tc_.batch_size) {
      flush(lr);
      if (until_converged && converged(stage_begin)) break;
    }
  }
  flush(lr);
}

namespace {

Checkpoint make_checkpoint(const Trainer& trainer, const TrainConfig& tc,
                           std::vector<OpponentRecord> vs, std::string type_label) {
  Checkpoint c;
  c.actor = trainer.actor();
  c.critic = trainer.critic();
  c.meta.agent = tc.learner;
  c.meta.level = tc.level;
  c.meta.type_label = std::move(type_label);
  c.meta.trained_vs = std::move(vs);
  c.meta.episodes = trainer.episodes();
  const auto& starts = trainer.stats().stage_starts;
  c.meta.lr_schedule.assign(tc.lr_stages.begin(),
                            tc.lr_stages.begin() + static_cast<long>(starts.size()));
  c.meta.seed = tc.seed;
  return c;
}

void run_schedule(Trainer& trainer, const TrainConfig& tc) {
  for (std::size_t s = 0; s < tc.lr_stages.size(); ++s) {
    trainer.run_stage(static_cast<int>(s), tc.lr_stages[s], tc.max_episodes_per_stage, true);
  }
}

}  // namespace

TrainResult rl_base_on(std::vector<std::unique_ptr<Task>> tasks,
                       std::vector<env::PedType> labels, const TrainConfig& tc,
                       const net::NetShape& actor_shape) {
  tc.validate();
  Trainer trainer(std::move(tasks), std::move(labels), tc, net::init_params(actor_shape, tc.seed),
                  net::init_params(net::NetShape::critic(), tc.seed + 1));
  run_schedule(trainer, tc);
  TrainResult out{make_checkpoint(trainer, tc, {}, ""), trainer.stats()};
  return out;
}

TrainResult rl_base(const env::ScenarioConfig& cfg, const TrainConfig& tc) {
  cfg.validate();
  tc.validate();
  if (tc.opponents.empty()) throw ConfigError("train: no opponents given");
  std::vector<std::unique_ptr<Task>> tasks;
  std::vector<env::PedType> labels;
  std::vector<OpponentRecord> vs;
  for (const Opponent& o : tc.opponents) {
    tasks.push_back(std::make_unique<CrossingTask>(cfg, tc.learner, o));
    labels.push_back(o.type);
    vs.push_back(record_of(o, other(tc.learner)));
  }
  Trainer trainer(std::move(tasks), std::move(labels), tc,
                  net::init_params(net::NetShape::actor(), tc.seed),
                  net::init_params(net::NetShape::critic(), tc.seed + 1));
  run_schedule(trainer, tc);
  const std::string label =
      tc.learner == Role::Car ? "car" : std::string(env::to_string(tc.opponents.front().type));
  return TrainResult{make_checkpoint(trainer, tc, std::move(vs), label), trainer.stats()};
}

void write_train_stats_csv(const TrainStats& stats, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "episode,ped_type,reward,steps,collision,lr_stage\n";
  for (const EpisodeStat& e : stats.episodes) {
    os << e.episode << ',' << env::to_string(e.ped_type) << ',' << format_real(e.reward) << ','
       << e.steps << ',' << (e.collision ? 1 : 0) << ',' << e.lr_stage << '\n';
  }
  write_file(path, os.str());
}

}  // namespace lkmrl::train
