#include "lkmrl/config.hpp"

#include "lkmrl/errors.hpp"

namespace lkmrl::config {
namespace {

using nlohmann::json;

void require_object(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

json types_json(const std::vector<env::PedType>& ts) {
  json a = json::array();
  for (env::PedType t : ts) a.push_back(std::string(env::to_string(t)));
  return a;
}

std::vector<env::PedType> types_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a non-empty type list");
  std::vector<env::PedType> out;
  for (const json& v : j) out.push_back(env::ped_type_from_string(v.get<std::string>()));
  return out;
}

json opponents_json(const std::vector<OpponentSpec>& os) {
  json a = json::array();
  for (const OpponentSpec& o : os) {
    a.push_back({{"type", std::string(env::to_string(o.type))}, {"checkpoint", o.checkpoint}});
  }
  return a;
}

std::vector<OpponentSpec> opponents_from(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": opponents must be an array");
  std::vector<OpponentSpec> out;
  for (const json& o : j) {
    require_object(o, where + ".opponents[]");
    OpponentSpec s;
    for (const auto& [key, v] : o.items()) {
      if (key == "type") s.type = env::ped_type_from_string(v.get<std::string>());
      else if (key == "checkpoint") s.checkpoint = v.get<std::string>();
      else throw ConfigError(where + ".opponents[]: unknown key '" + key + "'");
    }
    out.push_back(s);
  }
  return out;
}

json policy_json(const PolicyConfig& p) {
  return {{"kind", p.kind},
          {"checkpoint", p.checkpoint},
          {"buffer", p.buffer},
          {"label", p.label},
          {"conjecturer_episodes", p.conjecturer_episodes}};
}

PolicyConfig policy_from(const json& j, const std::string& where) {
  require_object(j, where);
  PolicyConfig p;
  for (const auto& [key, v] : j.items()) {
    if (key == "kind") p.kind = v.get<std::string>();
    else if (key == "checkpoint") p.checkpoint = v.get<std::string>();
    else if (key == "buffer") p.buffer = v.get<std::string>();
    else if (key == "label") p.label = v.get<std::string>();
    else if (key == "conjecturer_episodes") p.conjecturer_episodes = v.get<int>();
    else throw ConfigError(where + ": unknown key '" + key + "'");
  }
  if (p.kind != "scripted" && p.kind != "checkpoint" && p.kind != "cola") {
    throw ConfigError(where + ": kind must be scripted, checkpoint or cola");
  }
  return p;
}

std::shared_ptr<const Checkpoint> load_shared(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + ": checkpoint path is required");
  return std::make_shared<const Checkpoint>(load_checkpoint(path));
}

}  // namespace

json to_json(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["scenario"] = c.scenario;
  j["train"] = c.train;
  j["cola"] = c.cola;
  j["hierarchy"] = {{"agent", to_string(c.hierarchy.agent)},
                    {"level", c.hierarchy.level},
                    {"opponents", opponents_json(c.hierarchy.opponents)},
                    {"meta_distribution", c.hierarchy.meta_distribution}};
  j["finetune"] = {{"base", c.finetune.base},
                   {"episodes", c.finetune.episodes},
                   {"lr", c.finetune.lr}};
  j["eval"] = {{"car", policy_json(c.eval.car)},
               {"ped", policy_json(c.eval.ped)},
               {"ped_types", types_json(c.eval.ped_types)},
               {"subject", to_string(c.eval.subject)},
               {"episodes", c.eval.episodes}};
  j["compare"] = {{"a", policy_json(c.compare.a)}, {"b", policy_json(c.compare.b)}};
  j["fill_buffer"] = {{"base", c.fill_buffer.base},
                      {"opponents", opponents_json(c.fill_buffer.opponents)}};
  j["run_cola"] = {{"base", c.run_cola.base},
                   {"buffer", c.run_cola.buffer},
                   {"ped_types", types_json(c.run_cola.ped_types)},
                   {"episodes", c.run_cola.episodes},
                   {"conjecturer_episodes", c.run_cola.conjecturer_episodes}};
  return j;
}

RunConfig from_json(const json& j) {
  require_object(j, "config");
  RunConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (key == "scenario") {
        lkmrl::env::from_json(v, c.scenario);
      } else if (key == "train") {
        lkmrl::train::from_json(v, c.train);
      } else if (key == "cola") {
        lkmrl::cola::from_json(v, c.cola);
      } else if (key == "hierarchy") {
        require_object(v, "hierarchy");
        for (const auto& [k, x] : v.items()) {
          if (k == "agent") c.hierarchy.agent = role_from_string(x.get<std::string>());
          else if (k == "level") c.hierarchy.level = x.get<int>();
          else if (k == "opponents") c.hierarchy.opponents = opponents_from(x, "hierarchy");
          else if (k == "meta_distribution") c.hierarchy.meta_distribution = x.get<std::vector<double>>();
          else throw ConfigError("hierarchy: unknown key '" + k + "'");
        }
      } else if (key == "finetune") {
        require_object(v, "finetune");
        for (const auto& [k, x] : v.items()) {
          if (k == "base") c.finetune.base = x.get<std::string>();
          else if (k == "episodes") c.finetune.episodes = x.get<long>();
          else if (k == "lr") c.finetune.lr = x.get<double>();
          else throw ConfigError("finetune: unknown key '" + k + "'");
        }
      } else if (key == "eval") {
        require_object(v, "eval");
        for (const auto& [k, x] : v.items()) {
          if (k == "car") c.eval.car = policy_from(x, "eval.car");
          else if (k == "ped") c.eval.ped = policy_from(x, "eval.ped");
          else if (k == "ped_types") c.eval.ped_types = types_from(x, "eval.ped_types");
          else if (k == "subject") c.eval.subject = role_from_string(x.get<std::string>());
          else if (k == "episodes") c.eval.episodes = x.get<long>();
          else throw ConfigError("eval: unknown key '" + k + "'");
        }
      } else if (key == "compare") {
        require_object(v, "compare");
        for (const auto& [k, x] : v.items()) {
          if (k == "a") c.compare.a = policy_from(x, "compare.a");
          else if (k == "b") c.compare.b = policy_from(x, "compare.b");
          else throw ConfigError("compare: unknown key '" + k + "'");
        }
      } else if (key == "fill_buffer") {
        require_object(v, "fill_buffer");
        for (const auto& [k, x] : v.items()) {
          if (k == "base") c.fill_buffer.base = x.get<std::string>();
          else if (k == "opponents") c.fill_buffer.opponents = opponents_from(x, "fill_buffer");
          else throw ConfigError("fill_buffer: unknown key '" + k + "'");
        }
      } else if (key == "run_cola") {
        require_object(v, "run_cola");
        for (const auto& [k, x] : v.items()) {
          if (k == "base") c.run_cola.base = x.get<std::string>();
          else if (k == "buffer") c.run_cola.buffer = x.get<std::string>();
          else if (k == "ped_types") c.run_cola.ped_types = types_from(x, "run_cola.ped_types");
          else if (k == "episodes") c.run_cola.episodes = x.get<long>();
          else if (k == "conjecturer_episodes") c.run_cola.conjecturer_episodes = x.get<int>();
          else throw ConfigError("run_cola: unknown key '" + k + "'");
        }
      } else {
        throw ConfigError("config: unknown section '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.scenario.validate();
  c.cola.validate();
  if (c.eval.episodes < 1) throw ConfigError("eval: episodes must be >= 1");
  if (c.run_cola.episodes < 1) throw ConfigError("run_cola: episodes must be >= 1");
  return c;
}

Loaded load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  Loaded out;
  if (j.is_object() && j.contains("tool") && j.contains("config")) {
    out.from_manifest = true;
    out.config = from_json(j.at("config"));
  } else {
    out.config = from_json(j);
  }
  return out;
}

std::vector<Opponent> resolve_opponents(const std::vector<OpponentSpec>& specs) {
  std::vector<Opponent> out;
  for (const OpponentSpec& s : specs) {
    Opponent o;
    o.type = s.type;
    if (!s.checkpoint.empty()) {
      o.policy = load_shared(s.checkpoint, "opponent");
      o.source = s.checkpoint;
    }
    out.push_back(std::move(o));
  }
  return out;
}

levelk::HierarchySpec resolve_hierarchy(const HierarchyConfig& h) {
  levelk::HierarchySpec s;
  s.agent = h.agent;
  s.level = h.level;
  s.opponents = resolve_opponents(h.opponents);
  s.meta_distribution = h.meta_distribution;
  return s;
}

eval::AgentSpec resolve_policy(const PolicyConfig& p, const RunConfig& rc, std::string fallback_label) {
  const std::string label = p.label.empty() ? std::move(fallback_label) : p.label;
  if (p.kind == "scripted") return eval::AgentSpec::scripted(label);
  auto ckpt = load_shared(p.checkpoint, label);
  if (p.kind == "checkpoint") return eval::AgentSpec::from_checkpoint(ckpt, label);
  if (p.buffer.empty()) throw ConfigError(label + ": COLA policy needs a buffer path");
  if (!std::filesystem::exists(p.buffer)) throw ConfigError(p.buffer + ": buffer file not found");
  auto buffer = std::make_shared<const cola::GradientBuffer>(
      cola::GradientBuffer::load(p.buffer, content_hash(*ckpt)));
  std::shared_ptr<const cola::TypeConjecturer> conj;
  if (rc.cola.belief_mode == cola::BeliefMode::Inferred) {
    conj = std::make_shared<const cola::TypeConjecturer>(cola::TypeConjecturer::fit(
        rc.scenario, rc.cola.window, p.conjecturer_episodes, rc.seed));
  }
  return eval::AgentSpec::cola_policy(ckpt, buffer, rc.cola, label, conj);
}

}  // namespace lkmrl::config
