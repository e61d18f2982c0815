#include <doctest.h>

#include <filesystem>
#include <string>

#include "lkmrl/errors.hpp"
#include "lkmrl/eval.hpp"

using namespace lkmrl;
using env::PedType;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "lkmrl_test_eval";
  std::filesystem::create_directories(dir);
  return dir / name;
}

// Scripted car against a scripted pedestrian without the evaluator.
struct Replay {
  long collisions = 0;
  double reward_sum = 0.0;
};

Replay replay(PedType t, long episodes, std::uint64_t seed) {
  const env::ScenarioConfig cfg;
  Replay out;
  for (long e = 1; e <= episodes; ++e) {
    env::Crossing c(cfg);
    const std::uint64_t s = seed + static_cast<std::uint64_t>(e);
    c.reset(t, s);
    env::EventKind last = env::EventKind::Timeout;
    while (!c.state().terminal) {
      const env::State st = c.state();
      const env::Action ac = env::level0_car_action(st, cfg);
      const env::Action ap = env::level0_ped_action(t, st, c.ped_rng());
      const env::StepResult r = c.step(ac, ap);
      out.reward_sum += r.r_car;
      last = r.event.kind;
    }
    if (last == env::EventKind::Collision) ++out.collisions;
  }
  return out;
}

eval::EvalSpec scripted_spec(long episodes, std::uint64_t seed) {
  eval::EvalSpec s;
  s.episodes = episodes;
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("scripted car against each type matches an independent replay") {
  const env::ScenarioConfig cfg;
  for (PedType t : env::kAllPedTypes) {
    eval::EvalSpec s = scripted_spec(60, 1000);
    s.ped_types = {t};
    const auto m = eval::evaluate(cfg, s);
    const Replay r = replay(t, 60, 1000);
    CHECK(m.collisions == r.collisions);
    CHECK(m.collision_rate == static_cast<double>(r.collisions) / 60.0);
    CHECK(m.reward_mean == doctest::Approx(r.reward_sum / 60.0).epsilon(1e-12));
  }
}

TEST_CASE("rates partition the episodes") {
  const env::ScenarioConfig cfg;
  const auto m = eval::evaluate(cfg, scripted_spec(90, 3));
  CHECK(m.episodes == 90);
  CHECK(m.collisions + m.arrivals + m.timeouts == 90);
  CHECK(m.collision_rate + m.arrival_rate + m.timeout_rate == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(m.episode_rewards.size() == 90);
  for (long e = 0; e < 90; ++e) CHECK(m.episode_types[e] == env::kAllPedTypes[e % 3]);
  double sum = 0.0;
  for (double r : m.episode_rewards) sum += r;
  CHECK(m.reward_mean == doctest::Approx(sum / 90.0).epsilon(1e-12));
  for (const auto& s : m.car_speed) CHECK(s.count <= 90);
  REQUIRE(!m.car_speed.empty());
  CHECK(m.car_speed.front().count == 90);
}

TEST_CASE("evaluation is deterministic and seed-sensitive") {
  const env::ScenarioConfig cfg;
  const auto a = eval::evaluate(cfg, scripted_spec(30, 8));
  const auto b = eval::evaluate(cfg, scripted_spec(30, 8));
  const auto c = eval::evaluate(cfg, scripted_spec(30, 9));
  CHECK(a.episode_rewards == b.episode_rewards);
  CHECK(a.episode_steps == b.episode_steps);
  CHECK(a.episode_rewards != c.episode_rewards);
}

TEST_CASE("deterministic agents give zero speed variance") {
  const env::ScenarioConfig cfg;
  eval::EvalSpec s = scripted_spec(25, 4);
  s.ped_types = {PedType::T2_Fast5};
  const auto m = eval::evaluate(cfg, s);
  for (const auto& st : m.ped_speed) CHECK(st.var == 0.0);
  for (const auto& st : m.car_speed) CHECK(st.var == 0.0);
}

TEST_CASE("paired comparison shares seeds and types") {
  const env::ScenarioConfig cfg;
  const eval::EvalSpec base = scripted_spec(45, 12);
  const auto cmp = eval::compare(cfg, base, eval::AgentSpec::scripted("a"), eval::AgentSpec::scripted("b"));
  CHECK(cmp.a.episode_types == cmp.b.episode_types);
  CHECK(cmp.a.episode_rewards == cmp.b.episode_rewards);
  CHECK(cmp.reward.mean_diff == 0.0);
  CHECK(cmp.reward.se == 0.0);
  CHECK(cmp.collision.mean_diff == 0.0);
  CHECK(cmp.a.run_id.rfind("a_vs_", 0) == 0);
  CHECK(cmp.b.run_id.rfind("b_vs_", 0) == 0);
}

TEST_CASE("profile gap stops where an episode ends") {
  std::vector<eval::StepStat> a{{1.0, 0, 10}, {2.0, 0, 10}, {9.0, 0, 4}};
  std::vector<eval::StepStat> b{{1.5, 0, 10}, {2.25, 0, 10}, {0.0, 0, 10}};
  CHECK(eval::profile_gap(a, 10, b, 10) == 0.5);
  CHECK(eval::profile_gap(a, 10, a, 10) == 0.0);
  CHECK(eval::profile_gap({}, 10, b, 10) == 0.0);
}

TEST_CASE("csv writers") {
  const env::ScenarioConfig cfg;
  auto m = eval::evaluate(cfg, scripted_spec(12, 2));
  m.run_id = "scripted_vs_T123";

  const auto metrics = scratch("metrics.csv");
  eval::write_metrics_csv(m, metrics);
  const auto rows = eval::read_metrics_csv(metrics);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].run_id == m.run_id);
  CHECK(rows[0].episodes == 12);
  CHECK(std::abs(rows[0].reward_mean - m.reward_mean) <= 1e-9);
  CHECK(std::abs(rows[0].reward_var - m.reward_var) <= 1e-9);
  CHECK(std::abs(rows[0].collision_rate - m.collision_rate) <= 1e-9);
  CHECK(std::abs(rows[0].mean_tt_dest - m.mean_tt_dest) <= 1e-9);
  const std::string first = read_file(metrics);
  CHECK(first.rfind("run_id,episodes,reward_mean,reward_var,collision_rate,mean_tt_dest\n", 0) == 0);
  eval::write_metrics_csv(m, metrics);
  CHECK(read_file(metrics) == first);

  const auto speed = scratch("speed.csv");
  eval::write_speed_csv(m, speed);
  const std::string sp = read_file(speed);
  CHECK(sp.rfind("step,agent,speed_mean,speed_var\n1,car,", 0) == 0);
  CHECK(sp.find("\n1,pedestrian,") != std::string::npos);

  eval::MetricsSummary empty;
  eval::write_speed_csv(empty, speed);
  CHECK(read_file(speed) == "step,agent,speed_mean,speed_var\n");

  const auto paired = scratch("paired.csv");
  const auto cmp = eval::compare(cfg, scripted_spec(12, 2), eval::AgentSpec::scripted("a"),
                                 eval::AgentSpec::scripted("b"));
  eval::write_paired_csv(cmp, paired);
  const std::string pc = read_file(paired);
  CHECK(pc.rfind("metric,n,mean_diff,se,ci_lo,ci_hi\nreward,12,", 0) == 0);
  CHECK(pc.find("\ncollision,12,") != std::string::npos);

  const auto missing = scratch("no_such_file.csv");
  std::filesystem::remove(missing);
  CHECK_THROWS_AS(eval::read_metrics_csv(missing), IoError);
  try {
    eval::read_metrics_csv(missing);
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("no_such_file.csv") != std::string::npos);
  }
}

TEST_CASE("cola spec needs a base and buffer and only drives the car") {
  const env::ScenarioConfig cfg;
  Checkpoint c;
  c.actor = net::zero_params(net::NetShape::actor());
  c.critic = net::zero_params(net::NetShape::critic());
  auto base = std::make_shared<const Checkpoint>(c);
  auto buf = std::make_shared<const cola::GradientBuffer>(c.actor.values.size(), 10, content_hash(c));
  const auto spec = eval::AgentSpec::cola_policy(base, buf, cola::ColaConfig{}, "cola");
  CHECK(spec.make(Role::Car, cfg) != nullptr);
  CHECK_THROWS(spec.make(Role::Pedestrian, cfg));
}
