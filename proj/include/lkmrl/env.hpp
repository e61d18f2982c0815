#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "lkmrl/rng.hpp"

namespace lkmrl::env {

/// Network input: current and previous (distance, speed, action) of both
/// agents, normalized.
using Obs = std::array<double, 12>;
inline constexpr std::size_t kObsSize = 12;
inline constexpr std::size_t kActionCount = 3;

/// Target walking speeds of the scripted pedestrians: 5 km/h and 3 km/h.
inline constexpr double kFastWalkSpeed = 1.39;
inline constexpr double kSlowWalkSpeed = 3.0 / 3.6;

/// Point-mass crossing: the car drives along x from 0 to `car_dest`, the
/// pedestrian walks along y from 0 to `ped_dest` across the crosswalk at
/// x = `crosswalk_x`.
struct ScenarioConfig {
  double dt = 0.05;
  int horizon = 300;
  double car_dest = 40.0;
  double crosswalk_x = 30.0;
  double ped_dest = 6.0;
  double ped_y_min = -1.0;
  double conflict_x_halfwidth = 2.0;
  double conflict_y_lo = 2.0;
  double conflict_y_hi = 4.0;
  double car_vmax = 4.0;
  double car_v0 = 1.39;
  double car_accel = 1.5;
  double ped_vmax = 1.39;
  double ped_vmin = -1.39;
  double ped_accel = 1.0;

  double car_progress_reward = 0.1;
  double ped_progress_reward = 0.5;
  double time_penalty = 0.01;
  double collision_penalty = 10.0;
  double arrival_bonus = 5.0;

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;
};

void to_json(nlohmann::json& j, const ScenarioConfig& c);
/// Missing keys keep their defaults; unknown keys are a ConfigError.
void from_json(const nlohmann::json& j, ScenarioConfig& c);

enum class Action : int { Decel = -1, Cruise = 0, Accel = 1 };

/// Output slot of the actor head: Decel, Cruise, Accel.
constexpr int slot_of(Action a) { return static_cast<int>(a) + 1; }
Action action_from_slot(int slot);
constexpr double code_of(Action a) { return static_cast<double>(static_cast<int>(a)); }

enum class PedType { T1_Random = 0, T2_Fast5 = 1, T3_Slow3 = 2 };
inline constexpr std::array<PedType, 3> kAllPedTypes{
    PedType::T1_Random, PedType::T2_Fast5, PedType::T3_Slow3};

std::string_view to_string(PedType t);
PedType ped_type_from_string(std::string_view s);
constexpr int index_of(PedType t) { return static_cast<int>(t); }

/// Upper speed a pedestrian of this type walks at. T1 (and learned
/// pedestrians) use the full `ped_vmax`.
double ped_speed_cap(PedType t, const ScenarioConfig& cfg);

struct State {
  double d_c = 0.0;
  double d_p = 0.0;
  double v_c = 0.0;
  double v_p = 0.0;
  Action a_c = Action::Cruise;
  Action a_p = Action::Cruise;
  double prev_d_c = 0.0;
  double prev_d_p = 0.0;
  double prev_v_c = 0.0;
  double prev_v_p = 0.0;
  Action prev_a_c = Action::Cruise;
  Action prev_a_p = Action::Cruise;
  int t = 0;

  // Not part of the observation.
  double ped_vcap = 0.0;
  bool ped_arrived = false;
  bool terminal = false;

  bool operator==(const State&) const = default;
};

double car_x(const State& s, const ScenarioConfig& cfg);
double ped_y(const State& s, const ScenarioConfig& cfg);

enum class EventKind { None, Collision, CarArrived, PedArrived, Timeout };
std::string_view to_string(EventKind k);

struct StepEvent {
  EventKind kind = EventKind::None;
  bool terminal = false;
};

struct StepResult {
  State next;
  double r_car = 0.0;
  double r_ped = 0.0;
  StepEvent event;
};

/// Initial state: car at x = 0 moving at `car_v0`, pedestrian at rest at y = 0.
State reset(const ScenarioConfig& cfg, PedType ped_type);

/// Pure transition. Throws UsageError on a terminal state.
StepResult step(const State& s, Action a_car, Action a_ped,
                const ScenarioConfig& cfg);

bool in_conflict_zone(double x_car, double y_ped, const ScenarioConfig& cfg);
bool in_conflict_zone(const State& s, const ScenarioConfig& cfg);

Action level0_ped_action(PedType type, const State& s, Rng& rng);

/// Accelerate-and-hold: the level-0 car drives to its goal as fast as it can.
Action level0_car_action(const State& s, const ScenarioConfig& cfg);

Obs encode_obs(const State& s, const ScenarioConfig& cfg);

/// One episode's worth of environment plus its per-role random streams.
/// Both agents' action sampling draws from their own stream so that two
/// policies evaluated on the same seed see common random numbers.
class Crossing {
 public:
  explicit Crossing(ScenarioConfig cfg);

  const State& reset(PedType ped_type, std::uint64_t seed);
  StepResult step(Action a_car, Action a_ped);

  const State& state() const { return state_; }
  const ScenarioConfig& config() const { return cfg_; }
  PedType ped_type() const { return ped_type_; }
  Rng& car_rng() { return car_rng_; }
  Rng& ped_rng() { return ped_rng_; }

 private:
  ScenarioConfig cfg_;
  State state_;
  PedType ped_type_ = PedType::T1_Random;
  Rng car_rng_;
  Rng ped_rng_;
};

}  // namespace lkmrl::env
