#include "lkmrl/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>

#include "lkmrl/cola.hpp"
#include "lkmrl/config.hpp"
#include "lkmrl/csv.hpp"
#include "lkmrl/errors.hpp"
#include "lkmrl/eval.hpp"
#include "lkmrl/kernels.hpp"
#include "lkmrl/levelk.hpp"
#include "lkmrl/selftest.hpp"
#include "lkmrl/train.hpp"

namespace lkmrl {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Collects inputs and outputs of one subcommand and writes the RunManifest.
class Run {
 public:
  Run(std::string command, config::RunConfig rc, fs::path out)
      : command_(std::move(command)), rc_(std::move(rc)), out_(std::move(out)) {}

  const config::RunConfig& rc() const { return rc_; }
  fs::path path(const std::string& name) const { return out_ / name; }

  void input(const std::string& role, const std::string& p) {
    if (p.empty()) return;
    inputs_.push_back({{"role", role}, {"path", p}, {"sha256", file_sha256(p)}});
  }
  void output(const std::string& name) { outputs_.push_back(name); }

  void finish() {
    json outs = json::array();
    for (const std::string& name : outputs_) {
      outs.push_back({{"file", name}, {"sha256", file_sha256(path(name))}});
    }
    json m = {{"tool", "lkmrl"},
              {"version", kToolVersion},
              {"command", command_},
              {"kernels", kernels::active().name},
              {"seed", rc_.seed},
              {"config", config::to_json(rc_)},
              {"inputs", inputs_},
              {"outputs", outs}};
    write_file(path("manifest.json"), m.dump(2) + "\n");
  }

 private:
  std::string command_;
  config::RunConfig rc_;
  fs::path out_;
  json inputs_ = json::array();
  std::vector<std::string> outputs_;
};

void save_train_outputs(Run& run, const train::TrainResult& r) {
  save_checkpoint(r.checkpoint, run.path("checkpoint.json"));
  run.output("checkpoint.json");
  train::write_train_stats_csv(r.stats, run.path("train_stats.csv"));
  run.output("train_stats.csv");
  const json h = levelk::hierarchy_manifest(
      {levelk::manifest_entry(r.checkpoint, run.path("checkpoint.json"))});
  write_file(run.path("hierarchy.json"), h.dump(2) + "\n");
  run.output("hierarchy.json");
}

void record_opponents(Run& run, const std::vector<config::OpponentSpec>& os) {
  for (const auto& o : os) run.input("opponent", o.checkpoint);
}

void record_policy(Run& run, const std::string& role, const config::PolicyConfig& p) {
  run.input(role, p.checkpoint);
  run.input(role + "_buffer", p.buffer);
}

train::TrainConfig train_config(const config::RunConfig& rc) {
  train::TrainConfig tc = rc.train;
  tc.seed = rc.seed;
  return tc;
}

void cmd_train(Run& run, bool base_only) {
  const config::RunConfig& rc = run.rc();
  if (base_only && rc.hierarchy.level != 1) {
    throw ConfigError("train-base: trains level 1; use train-levelk for level " +
                      std::to_string(rc.hierarchy.level));
  }
  record_opponents(run, rc.hierarchy.opponents);
  const levelk::HierarchySpec spec = config::resolve_hierarchy(rc.hierarchy);
  save_train_outputs(run, levelk::train_level_k(rc.scenario, spec, train_config(rc)));
}

void cmd_finetune(Run& run) {
  const config::RunConfig& rc = run.rc();
  if (rc.finetune.base.empty()) throw ConfigError("finetune: finetune.base is required");
  const Checkpoint base = load_checkpoint(rc.finetune.base);
  run.input("base", rc.finetune.base);
  record_opponents(run, rc.hierarchy.opponents);
  const levelk::HierarchySpec spec = config::resolve_hierarchy(rc.hierarchy);
  save_train_outputs(run, levelk::finetune(rc.scenario, base, spec, rc.finetune.episodes,
                                           rc.finetune.lr, train_config(rc)));
}

void cmd_fill_buffer(Run& run) {
  const config::RunConfig& rc = run.rc();
  if (rc.fill_buffer.base.empty()) throw ConfigError("fill-buffer: fill_buffer.base is required");
  const Checkpoint base = load_checkpoint(rc.fill_buffer.base);
  run.input("base", rc.fill_buffer.base);
  record_opponents(run, rc.fill_buffer.opponents);
  const auto opponents = config::resolve_opponents(rc.fill_buffer.opponents);
  const cola::GradientBuffer buf =
      cola::fill_gradient_buffer(rc.scenario, base, rc.cola, opponents, rc.seed);
  buf.save(run.path("buffer.bin"));
  run.output("buffer.bin");
}

void cmd_run_cola(Run& run) {
  const config::RunConfig& rc = run.rc();
  config::PolicyConfig p;
  p.kind = "cola";
  p.checkpoint = rc.run_cola.base;
  p.buffer = rc.run_cola.buffer;
  p.conjecturer_episodes = rc.run_cola.conjecturer_episodes;
  record_policy(run, "car", p);
  const eval::AgentSpec car = config::resolve_policy(p, rc, "cola");

  std::ostringstream trace, episodes;
  trace << "episode,ped_type,t,belief_T1,belief_T2,belief_T3,delta_norm,mean_kl,exceeds_delta\n";
  episodes << "episode,ped_type,reward,steps,collision\n";
  const auto& types = rc.run_cola.ped_types;
  for (long e = 1; e <= rc.run_cola.episodes; ++e) {
    const env::PedType type = types[static_cast<std::size_t>(e - 1) % types.size()];
    const cola::ColaEpisode ep =
        cola::run_cola_episode(rc.scenario, car.checkpoint, car.buffer, car.cola,
                               Opponent{type, nullptr, ""}, rc.seed + static_cast<std::uint64_t>(e),
                               car.conjecturer);
    const std::string_view tn = env::to_string(type);
    for (const cola::AdaptEvent& a : ep.trace) {
      trace << e << ',' << tn << ',' << a.t << ',' << format_real(a.belief.p[0]) << ','
            << format_real(a.belief.p[1]) << ',' << format_real(a.belief.p[2]) << ','
            << format_real(a.delta_norm) << ',' << format_real(a.mean_kl) << ','
            << (a.exceeds_delta ? 1 : 0) << '\n';
    }
    episodes << e << ',' << tn << ',' << format_real(ep.trajectory.total_return) << ','
             << ep.trajectory.steps.size() << ',' << (ep.trajectory.collided() ? 1 : 0) << '\n';
  }
  write_file(run.path("cola_trace.csv"), trace.str());
  run.output("cola_trace.csv");
  write_file(run.path("cola_episodes.csv"), episodes.str());
  run.output("cola_episodes.csv");
}

eval::EvalSpec eval_spec(Run& run) {
  const config::RunConfig& rc = run.rc();
  eval::EvalSpec spec;
  record_policy(run, "car", rc.eval.car);
  record_policy(run, "ped", rc.eval.ped);
  spec.car = config::resolve_policy(rc.eval.car, rc, "car_" + rc.eval.car.kind);
  spec.ped = config::resolve_policy(rc.eval.ped, rc, "ped_" + rc.eval.ped.kind);
  spec.ped_types = rc.eval.ped_types;
  spec.subject = rc.eval.subject;
  spec.episodes = rc.eval.episodes;
  spec.seed = rc.seed;
  return spec;
}

void cmd_eval(Run& run) {
  const eval::MetricsSummary m = eval::evaluate(run.rc().scenario, eval_spec(run));
  eval::write_metrics_csv(m, run.path("metrics.csv"));
  run.output("metrics.csv");
  eval::write_speed_csv(m, run.path("speed.csv"));
  run.output("speed.csv");
}

void cmd_compare(Run& run) {
  const config::RunConfig& rc = run.rc();
  const eval::EvalSpec base = eval_spec(run);
  record_policy(run, "a", rc.compare.a);
  record_policy(run, "b", rc.compare.b);
  const eval::AgentSpec a = config::resolve_policy(rc.compare.a, rc, "a_" + rc.compare.a.kind);
  const eval::AgentSpec b = config::resolve_policy(rc.compare.b, rc, "b_" + rc.compare.b.kind);
  const eval::PairedComparison c = eval::compare(rc.scenario, base, a, b);
  eval::write_metrics_csv(std::vector<eval::MetricsSummary>{c.a, c.b}, run.path("paired.csv"));
  run.output("paired.csv");
  eval::write_paired_csv(c, run.path("paired_diff.csv"));
  run.output("paired_diff.csv");
  eval::write_speed_csv(c.a, run.path("speed_a.csv"));
  run.output("speed_a.csv");
  eval::write_speed_csv(c.b, run.path("speed_b.csv"));
  run.output("speed_b.csv");
}

bool cmd_selftest(Run& run) {
  const auto checks = selftest::run_all(run.rc().seed);
  std::ostringstream os;
  os << "check,passed,value\n";
  bool ok = true;
  for (const auto& c : checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail
              << "; value=" << format_real(c.value) << ")\n";
    os << c.name << ',' << (c.passed ? 1 : 0) << ',' << format_real(c.value) << '\n';
    ok = ok && c.passed;
  }
  write_file(run.path("selftest.csv"), os.str());
  run.output("selftest.csv");
  return ok;
}

}  // namespace

int cli_main(int argc, char** argv) {
  CLI::App app{"Level-k crossing simulator: training, COLA adaptation and evaluation", "lkmrl"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  struct Cmd {
    const char* name;
    const char* help;
  };
  const Cmd cmds[] = {
      {"train-base", "train the level-1 base policy against scripted opponents"},
      {"train-levelk", "train a level-k best response to level-(k-1) opponents"},
      {"finetune", "fine-tune a level-k checkpoint into level k+1"},
      {"fill-buffer", "roll out a base car and store per-type segment gradients"},
      {"run-cola", "run COLA episodes and record the adaptation trace"},
      {"eval", "evaluate a car/pedestrian pairing"},
      {"compare", "evaluate two car policies on identical seeds"},
      {"selftest", "run the invariant suites"},
  };
  for (const Cmd& c : cmds) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "JSON config or a RunManifest from an earlier run");
    sub->add_option("--seed", seed, "master seed (overrides the config)");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    config::RunConfig rc;
    if (!config_path.empty()) rc = config::load(config_path).config;
    if (seed) rc.seed = *seed;
    Run run(command, rc, out_dir);
    bool ok = true;
    if (command == "train-base") cmd_train(run, true);
    else if (command == "train-levelk") cmd_train(run, false);
    else if (command == "finetune") cmd_finetune(run);
    else if (command == "fill-buffer") cmd_fill_buffer(run);
    else if (command == "run-cola") cmd_run_cola(run);
    else if (command == "eval") cmd_eval(run);
    else if (command == "compare") cmd_compare(run);
    else if (command == "selftest") ok = cmd_selftest(run);
    run.finish();
    if (!ok) {
      std::cerr << "lkmrl " << command << ": self-test failures\n";
      return 2;
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "lkmrl " << command << ": configuration error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "lkmrl " << command << ": error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace lkmrl
