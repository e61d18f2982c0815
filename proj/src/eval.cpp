#include "lkmrl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lkmrl/csv.hpp"
#include "lkmrl/errors.hpp"
#include "lkmrl/train.hpp"

namespace lkmrl::eval {
namespace {

// Welford accumulator; a constant series has exactly zero variance.
struct Running {
  long n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  StepStat stat() const { return {mean, n > 1 ? m2 / static_cast<double>(n - 1) : 0.0, n}; }
};

void add_speed(std::vector<Running>& acc, std::size_t i, double v) {
  if (acc.size() <= i) acc.resize(i + 1);
  acc[i].add(v);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

AgentSpec AgentSpec::scripted(std::string label) {
  AgentSpec s;
  s.kind = Kind::Scripted;
  s.label = std::move(label);
  return s;
}

AgentSpec AgentSpec::from_checkpoint(std::shared_ptr<const Checkpoint> c, std::string label) {
  AgentSpec s;
  s.kind = Kind::Checkpoint;
  s.checkpoint = std::move(c);
  s.label = std::move(label);
  return s;
}

AgentSpec AgentSpec::cola_policy(std::shared_ptr<const Checkpoint> base,
                                 std::shared_ptr<const cola::GradientBuffer> buffer,
                                 cola::ColaConfig cc, std::string label,
                                 std::shared_ptr<const cola::TypeConjecturer> conjecturer) {
  AgentSpec s;
  s.kind = Kind::Cola;
  s.checkpoint = std::move(base);
  s.buffer = std::move(buffer);
  s.cola = cc;
  s.conjecturer = std::move(conjecturer);
  s.label = std::move(label);
  return s;
}

std::unique_ptr<Agent> AgentSpec::make(Role role, const env::ScenarioConfig& cfg) const {
  switch (kind) {
    case Kind::Scripted:
      return make_agent(Opponent{}, role, cfg);
    case Kind::Checkpoint:
      if (!checkpoint) throw ConfigError("eval: '" + label + "' has no checkpoint");
      return make_agent(Opponent{env::PedType::T1_Random, checkpoint, ""}, role, cfg);
    case Kind::Cola:
      if (role != Role::Car) throw ConfigError("eval: COLA only drives the car");
      if (!checkpoint || !buffer) throw ConfigError("eval: COLA needs a base checkpoint and buffer");
      return std::make_unique<cola::ColaAgent>(checkpoint, buffer, cola, conjecturer);
  }
  throw ConfigError("eval: unknown agent kind");
}

MetricsSummary evaluate(const env::ScenarioConfig& cfg, const EvalSpec& spec) {
  cfg.validate();
  if (spec.episodes < 1) throw ConfigError("eval: episodes must be >= 1");
  if (spec.ped_types.empty()) throw ConfigError("eval: no pedestrian types");
  std::unique_ptr<Agent> car = spec.car.make(Role::Car, cfg);
  std::unique_ptr<Agent> ped = spec.ped.make(Role::Pedestrian, cfg);

  MetricsSummary m;
  m.run_id = spec.car.label + "_vs_" + spec.ped.label;
  m.episodes = spec.episodes;
  std::vector<Running> car_speed, ped_speed;
  long tt_sum = 0;
  env::Crossing crossing(cfg);
  for (long e = 1; e <= spec.episodes; ++e) {
    const std::uint64_t seed = spec.seed + static_cast<std::uint64_t>(e);
    const env::PedType type = spec.ped_types[static_cast<std::size_t>(e - 1) % spec.ped_types.size()];
    crossing.reset(type, seed);
    car->begin_episode(type, seed);
    ped->begin_episode(type, seed);
    double reward = 0.0;
    int steps = 0;
    int ped_arrival_step = -1;
    env::EventKind last = env::EventKind::Timeout;
    while (!crossing.state().terminal) {
      const env::State before = crossing.state();
      const env::Obs obs = env::encode_obs(before, cfg);
      const env::Action ac = car->act(before, obs, crossing.car_rng());
      const env::Action ap = ped->act(before, obs, crossing.ped_rng());
      const env::StepResult r = crossing.step(ac, ap);
      car->observe(before, ac, ap, r);
      ped->observe(before, ac, ap, r);
      reward += spec.subject == Role::Car ? r.r_car : r.r_ped;
      add_speed(car_speed, static_cast<std::size_t>(steps), r.next.v_c);
      add_speed(ped_speed, static_cast<std::size_t>(steps), r.next.v_p);
      ++steps;
      if (r.next.ped_arrived && !before.ped_arrived) ped_arrival_step = steps;
      last = r.event.kind;
    }
    const env::EventKind outcome = train::outcome_of(last);
    m.collisions += outcome == env::EventKind::Collision;
    m.arrivals += outcome == env::EventKind::CarArrived;
    m.timeouts += outcome == env::EventKind::Timeout;
    if (spec.subject == Role::Car && outcome == env::EventKind::CarArrived) {
      ++m.subject_arrivals;
      tt_sum += steps;
    } else if (spec.subject == Role::Pedestrian && ped_arrival_step > 0) {
      ++m.subject_arrivals;
      tt_sum += ped_arrival_step;
    }
    m.episode_rewards.push_back(reward);
    m.episode_collisions.push_back(outcome == env::EventKind::Collision ? 1.0 : 0.0);
    m.episode_steps.push_back(steps);
    m.episode_types.push_back(type);
  }
  const stats::MeanVar mv = stats::mean_var(m.episode_rewards);
  m.reward_mean = mv.mean;
  m.reward_var = mv.var;
  const double n = static_cast<double>(m.episodes);
  m.collision_rate = static_cast<double>(m.collisions) / n;
  m.arrival_rate = static_cast<double>(m.arrivals) / n;
  m.timeout_rate = static_cast<double>(m.timeouts) / n;
  m.mean_tt_dest = m.subject_arrivals > 0
                       ? static_cast<double>(tt_sum) / static_cast<double>(m.subject_arrivals)
                       : 0.0;
  for (const Running& r : car_speed) m.car_speed.push_back(r.stat());
  for (const Running& r : ped_speed) m.ped_speed.push_back(r.stat());
  return m;
}

PairedComparison compare(const env::ScenarioConfig& cfg, const EvalSpec& base,
                         const AgentSpec& car_a, const AgentSpec& car_b) {
  EvalSpec sa = base;
  sa.car = car_a;
  EvalSpec sb = base;
  sb.car = car_b;
  PairedComparison c;
  c.a = evaluate(cfg, sa);
  c.b = evaluate(cfg, sb);
  c.reward = stats::paired_interval(c.a.episode_rewards, c.b.episode_rewards);
  c.collision = stats::paired_interval(c.a.episode_collisions, c.b.episode_collisions);
  return c;
}

double profile_gap(const std::vector<StepStat>& a, long episodes_a,
                   const std::vector<StepStat>& b, long episodes_b) {
  double gap = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i].count != episodes_a || b[i].count != episodes_b) break;
    gap = std::max(gap, std::abs(a[i].mean - b[i].mean));
  }
  return gap;
}

void write_metrics_csv(const std::vector<MetricsSummary>& rows, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "run_id,episodes,reward_mean,reward_var,collision_rate,mean_tt_dest\n";
  for (const MetricsSummary& m : rows) {
    os << m.run_id << ',' << m.episodes << ',' << format_real(m.reward_mean) << ','
       << format_real(m.reward_var) << ',' << format_real(m.collision_rate) << ','
       << format_real(m.mean_tt_dest) << '\n';
  }
  write_file(path, os.str());
}

void write_metrics_csv(const MetricsSummary& m, const std::filesystem::path& path) {
  write_metrics_csv(std::vector<MetricsSummary>{m}, path);
}

void write_speed_csv(const MetricsSummary& m, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "step,agent,speed_mean,speed_var\n";
  const std::size_t n = std::max(m.car_speed.size(), m.ped_speed.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (i < m.car_speed.size()) {
      os << i + 1 << ",car," << format_real(m.car_speed[i].mean) << ','
         << format_real(m.car_speed[i].var) << '\n';
    }
    if (i < m.ped_speed.size()) {
      os << i + 1 << ",pedestrian," << format_real(m.ped_speed[i].mean) << ','
         << format_real(m.ped_speed[i].var) << '\n';
    }
  }
  write_file(path, os.str());
}

void write_paired_csv(const PairedComparison& c, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "metric,n,mean_diff,se,ci_lo,ci_hi\n";
  auto row = [&](const char* name, const stats::PairedInterval& p) {
    os << name << ',' << p.n << ',' << format_real(p.mean_diff) << ',' << format_real(p.se) << ','
       << format_real(p.lo) << ',' << format_real(p.hi) << '\n';
  };
  row("reward", c.reward);
  row("collision", c.collision);
  write_file(path, os.str());
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::stringstream in(read_file(path));
  std::string line;
  std::getline(in, line);
  if (line != "run_id,episodes,reward_mean,reward_var,collision_rate,mean_tt_dest") {
    throw ConfigError(path.string() + ": unexpected metrics header");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != 6) throw ConfigError(path.string() + ": malformed row");
    rows.push_back({cells[0], std::stol(cells[1]), std::stod(cells[2]), std::stod(cells[3]),
                    std::stod(cells[4]), std::stod(cells[5])});
  }
  return rows;
}

}  // namespace lkmrl::eval
