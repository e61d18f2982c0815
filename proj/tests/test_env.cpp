#include <doctest.h>

#include <cmath>

#include "lkmrl/env.hpp"
#include "lkmrl/errors.hpp"
#include "lkmrl/rng.hpp"

using namespace lkmrl;
using env::Action;
using env::PedType;

namespace {

env::State at(double x, double y, const env::ScenarioConfig& cfg, PedType t = PedType::T1_Random) {
  env::State s = env::reset(cfg, t);
  s.d_c = cfg.car_dest - x;
  s.d_p = cfg.ped_dest - y;
  return s;
}

}  // namespace

TEST_CASE("reset places both agents at their start") {
  const env::ScenarioConfig cfg;
  const env::State s = env::reset(cfg, PedType::T2_Fast5);
  CHECK(s.d_c == 40.0);
  CHECK(s.d_p == 6.0);
  CHECK(s.v_c == 1.39);
  CHECK(s.v_p == 0.0);
  CHECK(s.t == 0);
  CHECK(s.prev_d_c == s.d_c);
  CHECK(s.prev_v_c == s.v_c);

  const env::Obs o = env::encode_obs(s, cfg);
  const env::Obs expect{1.0, 1.0, 0.3475, 0.0, 0, 0, 1.0, 1.0, 0.3475, 0.0, 0, 0};
  for (std::size_t i = 0; i < o.size(); ++i) CHECK(o[i] == doctest::Approx(expect[i]).epsilon(1e-15));
}

TEST_CASE("zeroed state encodes to zeros") {
  const env::Obs o = env::encode_obs(env::State{}, env::ScenarioConfig{});
  for (double v : o) CHECK(v == 0.0);
  CHECK(o.size() == 12);
}

TEST_CASE("config validation") {
  env::ScenarioConfig cfg;
  cfg.car_dest = 20.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.car_v0 = 5.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.conflict_y_hi = 7.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.ped_vmin = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(env::ScenarioConfig{}.validate());
}

TEST_CASE("config json round trip and unknown keys") {
  env::ScenarioConfig cfg;
  cfg.horizon = 123;
  cfg.car_accel = 2.5;
  nlohmann::json j = cfg;
  env::ScenarioConfig back;
  env::from_json(j, back);
  CHECK(back.horizon == 123);
  CHECK(back.car_accel == 2.5);
  CHECK_THROWS_AS(env::from_json(nlohmann::json{{"bogus", 1}}, back), ConfigError);
}

TEST_CASE("kinematics of one accelerating car step") {
  const env::ScenarioConfig cfg;
  const env::State s = env::reset(cfg, PedType::T2_Fast5);
  const env::StepResult r = env::step(s, Action::Accel, Action::Cruise, cfg);
  CHECK(r.next.v_c == doctest::Approx(1.465).epsilon(1e-14));
  CHECK(env::car_x(r.next, cfg) == doctest::Approx(0.07325).epsilon(1e-12));
  CHECK(r.next.prev_v_c == 1.39);
  CHECK(r.next.a_c == Action::Accel);
  CHECK(r.next.t == 1);
  CHECK(r.r_car == doctest::Approx(0.1 * 0.07325 - 0.01));
}

TEST_CASE("collision in the conflict zone") {
  const env::ScenarioConfig cfg;
  const env::StepResult r = env::step(at(29.0, 3.0, cfg), Action::Cruise, Action::Cruise, cfg);
  CHECK(r.event.kind == env::EventKind::Collision);
  CHECK(r.event.terminal);
  const double progress = env::car_x(r.next, cfg) - 29.0;
  CHECK(r.r_car == doctest::Approx(0.1 * progress - 0.01 - 10.0));
  CHECK(r.r_ped == doctest::Approx(-0.01 - 10.0));
  CHECK(env::in_conflict_zone(r.next, cfg));
}

TEST_CASE("ped speed clamps at the bound") {
  const env::ScenarioConfig cfg;
  env::State s = env::reset(cfg, PedType::T1_Random);
  s.v_p = 1.39;
  CHECK(env::step(s, Action::Cruise, Action::Accel, cfg).next.v_p == 1.39);
  s.v_p = -1.39;
  CHECK(env::step(s, Action::Cruise, Action::Decel, cfg).next.v_p == -1.39);
}

TEST_CASE("backing pedestrian stops at the lower clamp") {
  const env::ScenarioConfig cfg;
  env::State s = at(0.0, -0.99, cfg);
  s.v_p = -1.39;
  const env::StepResult r = env::step(s, Action::Cruise, Action::Decel, cfg);
  CHECK(env::ped_y(r.next, cfg) == cfg.ped_y_min);
  CHECK(env::encode_obs(r.next, cfg)[1] == doctest::Approx(7.0 / 6.0));
}

TEST_CASE("car arrival outranks pedestrian arrival") {
  const env::ScenarioConfig cfg;
  env::State s = at(39.99, 5.99, cfg);
  s.v_p = 1.0;
  const env::StepResult r = env::step(s, Action::Cruise, Action::Cruise, cfg);
  CHECK(r.event.kind == env::EventKind::CarArrived);
  CHECK(r.event.terminal);
  CHECK(r.next.ped_arrived);
  CHECK(r.r_car == doctest::Approx(0.1 * 0.01 - 0.01 + 5.0));
  CHECK(r.r_ped == doctest::Approx(0.5 * 0.01 - 0.01 + 5.0));
}

TEST_CASE("pedestrian arrival is absorbing and not terminal") {
  const env::ScenarioConfig cfg;
  env::State s = at(5.0, 5.99, cfg);
  s.v_p = 1.0;
  env::StepResult r = env::step(s, Action::Cruise, Action::Cruise, cfg);
  CHECK(r.event.kind == env::EventKind::PedArrived);
  CHECK_FALSE(r.event.terminal);
  r = env::step(r.next, Action::Cruise, Action::Decel, cfg);
  CHECK(env::ped_y(r.next, cfg) == cfg.ped_dest);
  CHECK(r.event.kind == env::EventKind::None);
  CHECK(r.r_ped == doctest::Approx(-0.01));
}

TEST_CASE("timeout at the horizon and no step after a terminal event") {
  env::ScenarioConfig cfg;
  cfg.horizon = 3;
  env::State s = env::reset(cfg, PedType::T3_Slow3);
  env::StepResult r;
  for (int i = 0; i < 3; ++i) {
    r = env::step(s, Action::Cruise, Action::Cruise, cfg);
    s = r.next;
    CHECK(r.event.terminal == (i == 2));
  }
  CHECK(r.event.kind == env::EventKind::Timeout);
  CHECK_THROWS_AS(env::step(s, Action::Cruise, Action::Cruise, cfg), UsageError);
}

TEST_CASE("type-1 action frequencies") {
  const env::State s = env::reset(env::ScenarioConfig{}, PedType::T1_Random);
  Rng rng(11);
  int counts[3] = {0, 0, 0};
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[env::slot_of(env::level0_ped_action(PedType::T1_Random, s, rng))];
  // Cruise 0.2, Accel 0.43, Decel ("backward") 0.37.
  CHECK(std::abs(counts[1] / double(n) - 0.2) < 0.01);
  CHECK(std::abs(counts[2] / double(n) - 0.43) < 0.01);
  CHECK(std::abs(counts[0] / double(n) - 0.37) < 0.01);
}

TEST_CASE("deterministic pedestrian types reach their walking speed") {
  const env::ScenarioConfig cfg;
  const int reach = static_cast<int>(std::ceil(1.39 / (cfg.ped_accel * cfg.dt)));
  CHECK(reach == 28);
  for (PedType t : {PedType::T2_Fast5, PedType::T3_Slow3}) {
    const double target = t == PedType::T2_Fast5 ? 1.39 : 3.0 / 3.6;
    env::State s = env::reset(cfg, t);
    Rng rng(0);
    for (int i = 1; i <= 100; ++i) {
      s = env::step(s, env::level0_car_action(s, cfg), env::level0_ped_action(t, s, rng), cfg).next;
      if (i >= reach) CHECK(s.v_p == doctest::Approx(target).epsilon(1e-12));
    }
  }
  const env::State s = env::reset(cfg, PedType::T3_Slow3);
  Rng rng(0);
  CHECK(env::level0_ped_action(PedType::T3_Slow3, s, rng) == Action::Accel);
  env::State fast = s;
  fast.v_p = 1.39;
  CHECK(env::level0_ped_action(PedType::T2_Fast5, fast, rng) == Action::Cruise);
}

TEST_CASE("level-0 car accelerates then holds") {
  const env::ScenarioConfig cfg;
  env::State s = env::reset(cfg, PedType::T2_Fast5);
  CHECK(env::level0_car_action(env::State{}, cfg) == Action::Accel);
  env::State top = s;
  top.v_c = cfg.car_vmax;
  CHECK(env::level0_car_action(top, cfg) == Action::Cruise);
  double prev = s.v_c;
  bool flat = false;
  for (int i = 0; i < 100; ++i) {
    const Action a = env::level0_car_action(s, cfg);
    CHECK(a != Action::Decel);
    s = env::step(s, a, Action::Cruise, cfg).next;
    CHECK(s.v_c >= prev);
    if (flat) CHECK(s.v_c == cfg.car_vmax);
    flat = flat || s.v_c == cfg.car_vmax;
    prev = s.v_c;
  }
  CHECK(flat);
}

TEST_CASE("speed and position bounds under random actions") {
  const env::ScenarioConfig cfg;
  Rng rng(21);
  for (int e = 0; e < 200; ++e) {
    env::State s = env::reset(cfg, env::kAllPedTypes[e % 3]);
    while (!s.terminal) {
      const auto r = env::step(s, env::action_from_slot(static_cast<int>(rng.index(3))),
                               env::action_from_slot(static_cast<int>(rng.index(3))), cfg);
      const env::State& n = r.next;
      REQUIRE(n.v_c >= 0.0);
      REQUIRE(n.v_c <= cfg.car_vmax);
      REQUIRE(n.v_p >= cfg.ped_vmin);
      REQUIRE(n.v_p <= cfg.ped_vmax);
      REQUIRE(n.d_c >= 0.0);
      REQUIRE(n.d_c <= cfg.car_dest);
      REQUIRE(env::ped_y(n, cfg) >= cfg.ped_y_min);
      for (double v : env::encode_obs(n, cfg)) REQUIRE(std::abs(v) <= 7.0 / 6.0 + 1e-12);
      REQUIRE((r.event.kind == env::EventKind::Collision) == env::in_conflict_zone(n, cfg));
      REQUIRE(n.t <= cfg.horizon);
      s = n;
    }
  }
}

TEST_CASE("crossing is deterministic given the seed") {
  const env::ScenarioConfig cfg;
  auto roll = [&](std::uint64_t seed) {
    env::Crossing c(cfg);
    c.reset(PedType::T1_Random, seed);
    std::vector<env::State> out;
    while (!c.state().terminal) {
      const auto a = env::level0_ped_action(PedType::T1_Random, c.state(), c.ped_rng());
      out.push_back(c.step(env::level0_car_action(c.state(), cfg), a).next);
    }
    return out;
  };
  CHECK(roll(7) == roll(7));
  CHECK(roll(7) != roll(8));
}

TEST_CASE("type names round trip") {
  for (PedType t : env::kAllPedTypes) CHECK(env::ped_type_from_string(env::to_string(t)) == t);
  CHECK_THROWS_AS(env::ped_type_from_string("T4"), ConfigError);
  CHECK(env::action_from_slot(env::slot_of(Action::Decel)) == Action::Decel);
  CHECK_THROWS_AS(env::action_from_slot(3), UsageError);
}
