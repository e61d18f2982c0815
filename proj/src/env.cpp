#include "lkmrl/env.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "lkmrl/errors.hpp"

namespace lkmrl::env {
namespace {

using DoubleField = double ScenarioConfig::*;

const std::map<std::string, DoubleField>& double_fields() {
  static const std::map<std::string, DoubleField> fields{
      {"dt", &ScenarioConfig::dt},
      {"car_dest", &ScenarioConfig::car_dest},
      {"crosswalk_x", &ScenarioConfig::crosswalk_x},
      {"ped_dest", &ScenarioConfig::ped_dest},
      {"ped_y_min", &ScenarioConfig::ped_y_min},
      {"conflict_x_halfwidth", &ScenarioConfig::conflict_x_halfwidth},
      {"conflict_y_lo", &ScenarioConfig::conflict_y_lo},
      {"conflict_y_hi", &ScenarioConfig::conflict_y_hi},
      {"car_vmax", &ScenarioConfig::car_vmax},
      {"car_v0", &ScenarioConfig::car_v0},
      {"car_accel", &ScenarioConfig::car_accel},
      {"ped_vmax", &ScenarioConfig::ped_vmax},
      {"ped_vmin", &ScenarioConfig::ped_vmin},
      {"ped_accel", &ScenarioConfig::ped_accel},
      {"car_progress_reward", &ScenarioConfig::car_progress_reward},
      {"ped_progress_reward", &ScenarioConfig::ped_progress_reward},
      {"time_penalty", &ScenarioConfig::time_penalty},
      {"collision_penalty", &ScenarioConfig::collision_penalty},
      {"arrival_bonus", &ScenarioConfig::arrival_bonus},
  };
  return fields;
}

void require(bool ok, const char* what) {
  if (!ok) throw ConfigError(std::string("scenario: ") + what);
}

}  // namespace

void ScenarioConfig::validate() const {
  for (const auto& [name, field] : double_fields()) {
    if (!std::isfinite(this->*field)) {
      throw ConfigError("scenario: " + name + " is not finite");
    }
  }
  require(dt > 0.0, "dt must be > 0");
  require(horizon >= 1, "horizon must be >= 1");
  require(crosswalk_x > 0.0 && crosswalk_x < car_dest,
          "need 0 < crosswalk_x < car_dest");
  require(conflict_y_lo < conflict_y_hi && conflict_y_hi < ped_dest,
          "need conflict_y_lo < conflict_y_hi < ped_dest");
  require(conflict_x_halfwidth >= 0.0, "conflict_x_halfwidth must be >= 0");
  require(ped_y_min <= 0.0, "ped_y_min must be <= 0");
  require(car_v0 >= 0.0 && car_v0 <= car_vmax, "need 0 <= car_v0 <= car_vmax");
  require(ped_vmin < 0.0 && ped_vmax > 0.0, "need ped_vmin < 0 < ped_vmax");
  require(car_accel > 0.0 && ped_accel > 0.0, "accelerations must be > 0");
}

void to_json(nlohmann::json& j, const ScenarioConfig& c) {
  j = nlohmann::json::object();
  for (const auto& [name, field] : double_fields()) j[name] = c.*field;
  j["horizon"] = c.horizon;
}

void from_json(const nlohmann::json& j, ScenarioConfig& c) {
  if (!j.is_object()) throw ConfigError("scenario: expected an object");
  const auto& fields = double_fields();
  for (const auto& [key, value] : j.items()) {
    if (key == "horizon") {
      if (!value.is_number_integer()) throw ConfigError("scenario: horizon must be an integer");
      c.horizon = value.get<int>();
      continue;
    }
    auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError("scenario: unknown key '" + key + "'");
    if (!value.is_number()) throw ConfigError("scenario: " + key + " must be a number");
    c.*(it->second) = value.get<double>();
  }
}

Action action_from_slot(int slot) {
  switch (slot) {
    case 0: return Action::Decel;
    case 1: return Action::Cruise;
    case 2: return Action::Accel;
  }
  throw UsageError("action slot out of range: " + std::to_string(slot));
}

std::string_view to_string(PedType t) {
  switch (t) {
    case PedType::T1_Random: return "T1";
    case PedType::T2_Fast5: return "T2";
    case PedType::T3_Slow3: return "T3";
  }
  return "?";
}

PedType ped_type_from_string(std::string_view s) {
  if (s == "T1" || s == "1") return PedType::T1_Random;
  if (s == "T2" || s == "2") return PedType::T2_Fast5;
  if (s == "T3" || s == "3") return PedType::T3_Slow3;
  throw ConfigError("unknown pedestrian type '" + std::string(s) + "'");
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::None: return "none";
    case EventKind::Collision: return "collision";
    case EventKind::CarArrived: return "car_arrived";
    case EventKind::PedArrived: return "ped_arrived";
    case EventKind::Timeout: return "timeout";
  }
  return "?";
}

double ped_speed_cap(PedType t, const ScenarioConfig& cfg) {
  switch (t) {
    case PedType::T1_Random: return cfg.ped_vmax;
    case PedType::T2_Fast5: return std::min(kFastWalkSpeed, cfg.ped_vmax);
    case PedType::T3_Slow3: return std::min(kSlowWalkSpeed, cfg.ped_vmax);
  }
  return cfg.ped_vmax;
}

double car_x(const State& s, const ScenarioConfig& cfg) { return cfg.car_dest - s.d_c; }
double ped_y(const State& s, const ScenarioConfig& cfg) { return cfg.ped_dest - s.d_p; }

State reset(const ScenarioConfig& cfg, PedType ped_type) {
  cfg.validate();
  State s;
  s.d_c = cfg.car_dest;
  s.d_p = cfg.ped_dest;
  s.v_c = cfg.car_v0;
  s.v_p = 0.0;
  s.prev_d_c = s.d_c;
  s.prev_d_p = s.d_p;
  s.prev_v_c = s.v_c;
  s.prev_v_p = s.v_p;
  s.ped_vcap = ped_speed_cap(ped_type, cfg);
  return s;
}

bool in_conflict_zone(double x_car, double y_ped, const ScenarioConfig& cfg) {
  return std::abs(x_car - cfg.crosswalk_x) <= cfg.conflict_x_halfwidth &&
         y_ped >= cfg.conflict_y_lo && y_ped <= cfg.conflict_y_hi;
}

bool in_conflict_zone(const State& s, const ScenarioConfig& cfg) {
  return in_conflict_zone(car_x(s, cfg), ped_y(s, cfg), cfg);
}

StepResult step(const State& s, Action a_car, Action a_ped,
                const ScenarioConfig& cfg) {
  if (s.terminal) throw UsageError("step() on a terminal state");
  if (s.t >= cfg.horizon) throw UsageError("step() past the horizon");

  StepResult out;
  State& n = out.next;
  n = s;
  n.prev_d_c = s.d_c;
  n.prev_d_p = s.d_p;
  n.prev_v_c = s.v_c;
  n.prev_v_p = s.v_p;
  n.prev_a_c = s.a_c;
  n.prev_a_p = s.a_p;
  n.a_c = a_car;
  n.a_p = a_ped;
  n.t = s.t + 1;

  n.v_c = std::clamp(s.v_c + code_of(a_car) * cfg.car_accel * cfg.dt, 0.0, cfg.car_vmax);
  n.v_p = std::clamp(s.v_p + code_of(a_ped) * cfg.ped_accel * cfg.dt, cfg.ped_vmin,
                     s.ped_vcap);

  const double x0 = car_x(s, cfg);
  const double y0 = ped_y(s, cfg);
  const double x_raw = x0 + n.v_c * cfg.dt;
  const bool car_arrived = x_raw >= cfg.car_dest;
  const double x1 = std::min(x_raw, cfg.car_dest);
  double y1 = y0;
  if (!s.ped_arrived) {
    y1 = std::clamp(y0 + n.v_p * cfg.dt, cfg.ped_y_min, cfg.ped_dest);
  }
  const bool ped_arrives_now = !s.ped_arrived && y1 >= cfg.ped_dest;
  n.ped_arrived = s.ped_arrived || ped_arrives_now;
  n.d_c = cfg.car_dest - x1;
  n.d_p = cfg.ped_dest - y1;

  const bool collision = in_conflict_zone(x1, y1, cfg);
  const bool timeout = n.t >= cfg.horizon;

  if (collision) {
    out.event.kind = EventKind::Collision;
  } else if (car_arrived) {
    out.event.kind = EventKind::CarArrived;
  } else if (ped_arrives_now) {
    out.event.kind = EventKind::PedArrived;
  } else if (timeout) {
    out.event.kind = EventKind::Timeout;
  }
  out.event.terminal = collision || car_arrived || timeout;
  n.terminal = out.event.terminal;

  out.r_car = cfg.car_progress_reward * (x1 - x0) - cfg.time_penalty;
  out.r_ped = cfg.ped_progress_reward * (y1 - y0) - cfg.time_penalty;
  if (collision) {
    out.r_car -= cfg.collision_penalty;
    out.r_ped -= cfg.collision_penalty;
  } else if (car_arrived) {
    out.r_car += cfg.arrival_bonus;
  }
  if (ped_arrives_now) out.r_ped += cfg.arrival_bonus;
  return out;
}

Action level0_ped_action(PedType type, const State& s, Rng& rng) {
  switch (type) {
    case PedType::T1_Random: {
      const double u = rng.uniform();
      if (u < 0.2) return Action::Cruise;
      if (u < 0.2 + 0.43) return Action::Accel;
      return Action::Decel;
    }
    case PedType::T2_Fast5:
      return s.v_p < kFastWalkSpeed ? Action::Accel : Action::Cruise;
    case PedType::T3_Slow3:
      return s.v_p < kSlowWalkSpeed ? Action::Accel : Action::Cruise;
  }
  return Action::Cruise;
}

Action level0_car_action(const State& s, const ScenarioConfig& cfg) {
  return s.v_c < cfg.car_vmax ? Action::Accel : Action::Cruise;
}

Obs encode_obs(const State& s, const ScenarioConfig& cfg) {
  return Obs{
      s.d_c / cfg.car_dest,       s.d_p / cfg.ped_dest,
      s.v_c / cfg.car_vmax,       s.v_p / cfg.ped_vmax,
      code_of(s.a_c),             code_of(s.a_p),
      s.prev_d_c / cfg.car_dest,  s.prev_d_p / cfg.ped_dest,
      s.prev_v_c / cfg.car_vmax,  s.prev_v_p / cfg.ped_vmax,
      code_of(s.prev_a_c),        code_of(s.prev_a_p),
  };
}

Crossing::Crossing(ScenarioConfig cfg) : cfg_(cfg) { cfg_.validate(); }

const State& Crossing::reset(PedType ped_type, std::uint64_t seed) {
  ped_type_ = ped_type;
  state_ = env::reset(cfg_, ped_type);
  car_rng_ = Rng(derive_seed(seed, Stream::Car));
  ped_rng_ = Rng(derive_seed(seed, Stream::Pedestrian));
  return state_;
}

StepResult Crossing::step(Action a_car, Action a_ped) {
  StepResult r = env::step(state_, a_car, a_ped, cfg_);
  state_ = r.next;
  return r;
}

}  // namespace lkmrl::env
