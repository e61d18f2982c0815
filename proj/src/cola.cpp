#include "lkmrl/cola.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "lkmrl/errors.hpp"
#include "lkmrl/kernels.hpp"

namespace lkmrl::cola {
namespace {

constexpr char kMagic[8] = {'L', 'K', 'M', 'R', 'L', 'G', 'B', '1'};

static_assert(std::endian::native == std::endian::little,
              "buffer files are little-endian; add byte swapping for this target");

template <class T>
void put(std::string& out, const T& v) {
  const char* p = reinterpret_cast<const char*>(&v);
  out.append(p, sizeof(T));
}

template <class T>
T get(const std::string& in, std::size_t& pos, const std::filesystem::path& path) {
  if (pos + sizeof(T) > in.size()) throw ConfigError(path.string() + ": truncated buffer file");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

Belief Belief::one_hot(env::PedType t) {
  Belief b;
  b.p = {0.0, 0.0, 0.0};
  b.p[env::index_of(t)] = 1.0;
  return b;
}

env::PedType Belief::argmax() const {
  const auto it = std::max_element(p.begin(), p.end());
  return env::kAllPedTypes[static_cast<std::size_t>(it - p.begin())];
}

bool Belief::valid(double tol) const {
  double s = 0.0;
  for (double x : p) {
    if (!(x >= 0.0)) return false;
    s += x;
  }
  return std::abs(s - 1.0) <= tol;
}

void ColaConfig::validate() const {
  if (lookahead < 1) throw ConfigError("cola: lookahead must be >= 1");
  if (sample_batch < 1) throw ConfigError("cola: sample_batch must be >= 1");
  if (!(step_size > 0.0)) throw ConfigError("cola: step_size must be > 0");
  if (capacity < 1) throw ConfigError("cola: capacity must be >= 1");
  if (episodes_per_type < 1) throw ConfigError("cola: episodes_per_type must be >= 1");
  if (segment_length < 1) throw ConfigError("cola: segment_length must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("cola: gamma must be in (0, 1]");
  if (window < 1) throw ConfigError("cola: window must be >= 1");
  if (!(kl_delta > 0.0)) throw ConfigError("cola: kl_delta must be > 0");
}

void to_json(nlohmann::json& j, const ColaConfig& c) {
  j = nlohmann::json{
      {"lookahead", c.lookahead},
      {"sample_batch", c.sample_batch},
      {"step_size", c.step_size},
      {"capacity", c.capacity},
      {"belief_mode", c.belief_mode == BeliefMode::Oracle ? "oracle" : "inferred"},
      {"episodes_per_type", c.episodes_per_type},
      {"segment_length", c.segment_length},
      {"gamma", c.gamma},
      {"window", c.window},
      {"kl_delta", c.kl_delta},
  };
}

void from_json(const nlohmann::json& j, ColaConfig& c) {
  if (!j.is_object()) throw ConfigError("cola: expected an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "lookahead") c.lookahead = v.get<int>();
      else if (key == "sample_batch") c.sample_batch = v.get<int>();
      else if (key == "step_size") c.step_size = v.get<double>();
      else if (key == "capacity") c.capacity = v.get<std::size_t>();
      else if (key == "belief_mode") {
        const std::string m = v.get<std::string>();
        if (m == "oracle") c.belief_mode = BeliefMode::Oracle;
        else if (m == "inferred") c.belief_mode = BeliefMode::Inferred;
        else throw ConfigError("cola: unknown belief_mode '" + m + "'");
      } else if (key == "episodes_per_type") c.episodes_per_type = v.get<int>();
      else if (key == "segment_length") c.segment_length = v.get<int>();
      else if (key == "gamma") c.gamma = v.get<double>();
      else if (key == "window") c.window = v.get<int>();
      else if (key == "kl_delta") c.kl_delta = v.get<double>();
      else throw ConfigError("cola: unknown key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("cola: ") + e.what());
  }
}

GradientBuffer::GradientBuffer(std::size_t grad_length, std::size_t capacity_per_type,
                               std::string base_hash, int segment_length)
    : grad_length_(grad_length),
      capacity_(capacity_per_type),
      base_hash_(std::move(base_hash)),
      segment_length_(segment_length) {
  if (capacity_ < 1) throw ConfigError("gradient buffer: capacity must be >= 1");
}

void GradientBuffer::add(BufferEntry e) {
  if (e.grad.size() != grad_length_) {
    throw UsageError("gradient buffer: gradient length " + std::to_string(e.grad.size()) +
                     " != " + std::to_string(grad_length_));
  }
  auto& q = buckets_[env::index_of(e.type)];
  if (q.size() == capacity_) q.pop_front();
  q.push_back(std::move(e));
}

void GradientBuffer::save(const std::filesystem::path& path) const {
  nlohmann::json header{
      {"base_checkpoint_sha256", base_hash_},
      {"segment_length", segment_length_},
      {"grad_length", grad_length_},
      {"capacity", capacity_},
      {"counts", {{"T1", count(env::PedType::T1_Random)},
                  {"T2", count(env::PedType::T2_Fast5)},
                  {"T3", count(env::PedType::T3_Slow3)}}},
  };
  const std::string h = header.dump();
  std::string out(kMagic, sizeof kMagic);
  put<std::uint64_t>(out, h.size());
  out += h;
  for (const auto& q : buckets_) {
    for (const BufferEntry& e : q) {
      put<std::uint8_t>(out, static_cast<std::uint8_t>(env::index_of(e.type)));
      put<std::uint32_t>(out, e.episode);
      put<std::uint32_t>(out, e.segment);
      out.append(reinterpret_cast<const char*>(e.grad.values.data()),
                 e.grad.values.size() * sizeof(double));
    }
  }
  write_file(path, out);
}

GradientBuffer GradientBuffer::load(const std::filesystem::path& path,
                                    const std::string& expected_base_hash) {
  const std::string in = read_file(path);
  if (in.size() < sizeof kMagic || std::memcmp(in.data(), kMagic, sizeof kMagic) != 0) {
    throw ConfigError(path.string() + ": not a gradient buffer file");
  }
  std::size_t pos = sizeof kMagic;
  const auto hlen = get<std::uint64_t>(in, pos, path);
  if (pos + hlen > in.size()) throw ConfigError(path.string() + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.substr(pos, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": bad header: " + e.what());
  }
  pos += hlen;
  const std::string stored = header.at("base_checkpoint_sha256").get<std::string>();
  if (stored != expected_base_hash) {
    throw ConfigError(path.string() + ": buffer was filled for base checkpoint " + stored +
                      ", not " + expected_base_hash);
  }
  GradientBuffer buf(header.at("grad_length").get<std::size_t>(),
                     header.at("capacity").get<std::size_t>(), stored,
                     header.at("segment_length").get<int>());
  std::size_t total = 0;
  for (const auto& [k, v] : header.at("counts").items()) total += v.get<std::size_t>();
  for (std::size_t i = 0; i < total; ++i) {
    BufferEntry e;
    const auto type = get<std::uint8_t>(in, pos, path);
    if (type >= kTypeCount) throw ConfigError(path.string() + ": bad type label");
    e.type = env::kAllPedTypes[type];
    e.episode = get<std::uint32_t>(in, pos, path);
    e.segment = get<std::uint32_t>(in, pos, path);
    const std::size_t bytes = buf.grad_length_ * sizeof(double);
    if (pos + bytes > in.size()) throw ConfigError(path.string() + ": truncated entry");
    e.grad.values.resize(buf.grad_length_);
    std::memcpy(e.grad.values.data(), in.data() + pos, bytes);
    pos += bytes;
    buf.add(std::move(e));
  }
  if (pos != in.size()) throw ConfigError(path.string() + ": trailing bytes");
  return buf;
}

std::vector<net::Grad> segment_gradients(const train::Trajectory& tau, const net::Params& actor,
                                         int segment_length, double gamma) {
  std::vector<net::Grad> out;
  const std::size_t n = tau.steps.size();
  const auto len = static_cast<std::size_t>(segment_length);
  for (std::size_t begin = 0; begin < n; begin += len) {
    const std::size_t end = std::min(n, begin + len);
    net::Grad g = net::Grad::zeros(actor.values.size());
    double ret = 0.0;
    for (std::size_t i = end; i-- > begin;) {
      ret = tau.steps[i].reward + gamma * ret;
      net::accumulate_logprob_grad(actor, tau.steps[i].obs, tau.steps[i].slot, ret, g);
    }
    out.push_back(std::move(g));
  }
  return out;
}

GradientBuffer fill_gradient_buffer(const env::ScenarioConfig& cfg, const Checkpoint& base,
                                    const ColaConfig& cc, const std::vector<Opponent>& opponents,
                                    std::uint64_t seed) {
  cc.validate();
  if (opponents.empty()) throw ConfigError("fill_gradient_buffer: empty type set");
  if (base.meta.agent != Role::Car) throw ConfigError("fill_gradient_buffer: base must be a car policy");
  GradientBuffer buf(base.actor.values.size(), cc.capacity, content_hash(base), cc.segment_length);
  for (const Opponent& o : opponents) {
    CrossingTask task(cfg, Role::Car, o);
    const std::uint64_t type_seed =
        derive_seed(seed, 100 + static_cast<std::uint64_t>(env::index_of(o.type)));
    for (int ep = 0; ep < cc.episodes_per_type; ++ep) {
      const train::Trajectory tau =
          train::collect_episode(task, base.actor, derive_seed(type_seed, static_cast<std::uint64_t>(ep)));
      std::vector<net::Grad> grads = segment_gradients(tau, base.actor, cc.segment_length, cc.gamma);
      for (std::size_t s = 0; s < grads.size(); ++s) {
        buf.add(BufferEntry{o.type, static_cast<std::uint32_t>(ep), static_cast<std::uint32_t>(s),
                            std::move(grads[s])});
      }
    }
  }
  return buf;
}

void ObsWindow::push(const ObsRecord& r) {
  if (records_.size() == max_) records_.pop_front();
  records_.push_back(r);
}

Features window_features(const ObsWindow& w) {
  Features f{};
  if (w.empty()) return f;
  const double n = static_cast<double>(w.size());
  double mean = 0.0;
  for (const ObsRecord& r : w.records()) mean += r.state.v_p;
  mean /= n;
  double var = 0.0;
  for (const ObsRecord& r : w.records()) var += (r.state.v_p - mean) * (r.state.v_p - mean);
  var /= n;
  f[0] = mean;
  f[1] = var;
  for (const ObsRecord& r : w.records()) f[2 + env::slot_of(r.a_ped)] += 1.0 / n;
  return f;
}

TypeConjecturer::TypeConjecturer(std::array<Features, kTypeCount> centroids, Features scales,
                                 int window)
    : centroids_(centroids), scales_(scales), window_(window) {}

TypeConjecturer TypeConjecturer::fit(const env::ScenarioConfig& cfg, int window,
                                     int episodes_per_type, std::uint64_t seed) {
  if (window < 1 || episodes_per_type < 1) throw ConfigError("conjecturer: bad fit parameters");
  std::array<Features, kTypeCount> centroids{};
  std::vector<Features> all;
  ScriptedCarAgent car(cfg);
  ScriptedPedAgent ped;
  env::Crossing crossing(cfg);
  for (env::PedType t : env::kAllPedTypes) {
    std::vector<Features> mine;
    for (int ep = 0; ep < episodes_per_type; ++ep) {
      const std::uint64_t s = derive_seed(seed, 1000 * (env::index_of(t) + 1) + static_cast<std::uint64_t>(ep));
      crossing.reset(t, s);
      ped.begin_episode(t, s);
      ObsWindow w(static_cast<std::size_t>(window));
      while (!crossing.state().terminal) {
        const env::State before = crossing.state();
        const env::Obs obs = env::encode_obs(before, cfg);
        const env::Action ac = car.act(before, obs, crossing.car_rng());
        const env::Action ap = ped.act(before, obs, crossing.ped_rng());
        crossing.step(ac, ap);
        w.push({before, ac, ap});
        mine.push_back(window_features(w));
      }
    }
    Features c{};
    for (const Features& f : mine) {
      for (std::size_t k = 0; k < c.size(); ++k) c[k] += f[k] / static_cast<double>(mine.size());
    }
    centroids[env::index_of(t)] = c;
    all.insert(all.end(), mine.begin(), mine.end());
  }
  Features mean{}, scale{};
  for (const Features& f : all) {
    for (std::size_t k = 0; k < f.size(); ++k) mean[k] += f[k] / static_cast<double>(all.size());
  }
  for (const Features& f : all) {
    for (std::size_t k = 0; k < f.size(); ++k) {
      scale[k] += (f[k] - mean[k]) * (f[k] - mean[k]) / static_cast<double>(all.size());
    }
  }
  for (double& s : scale) s = std::max(std::sqrt(s), 1e-3);
  return TypeConjecturer(centroids, scale, window);
}

Belief TypeConjecturer::infer(const ObsWindow& w) const {
  if (w.empty()) return Belief::uniform();
  const Features f = window_features(w);
  const double evidence = static_cast<double>(w.size()) / static_cast<double>(window_);
  std::array<double, kTypeCount> logits{};
  for (std::size_t j = 0; j < kTypeCount; ++j) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
      const double z = (f[k] - centroids_[j][k]) / scales_[k];
      d2 += z * z;
    }
    logits[j] = -0.5 * evidence * d2;
  }
  const net::ActionDist d = net::softmax(logits);
  Belief b;
  std::copy(d.probs.begin(), d.probs.end(), b.p.begin());
  return b;
}

Belief infer_type(const ObsWindow& w, const TypeConjecturer& conjecturer) {
  return conjecturer.infer(w);
}

Belief update_belief(BeliefMode mode, const ObsWindow& w, std::optional<env::PedType> true_type,
                     const TypeConjecturer* conjecturer) {
  if (mode == BeliefMode::Oracle) {
    if (!true_type) throw UsageError("update_belief: oracle mode needs the true type");
    return Belief::one_hot(*true_type);
  }
  if (!conjecturer) throw UsageError("update_belief: inferred mode needs a conjecturer");
  return conjecturer->infer(w);
}

net::Params cola_adapt_step(const net::Params& theta, const Belief& b, const GradientBuffer& buf,
                            int sample_batch, double alpha, Rng& rng) {
  if (sample_batch < 1) throw UsageError("cola_adapt_step: sample batch must be >= 1");
  if (buf.grad_length() != theta.values.size()) {
    throw UsageError("cola_adapt_step: buffer gradients do not match the policy");
  }
  for (env::PedType t : env::kAllPedTypes) {
    if (b[t] > 0.0 && buf.count(t) == 0) {
      throw AdaptationError("cola_adapt_step: no stored gradients for type " +
                            std::string(env::to_string(t)) + " with belief " +
                            std::to_string(b[t]));
    }
  }
  net::Params out = theta;
  if (alpha == 0.0) return out;
  std::vector<double> sum(theta.values.size(), 0.0);
  const auto& k = kernels::active();
  env::PedType last_positive = env::PedType::T1_Random;
  for (env::PedType t : env::kAllPedTypes) {
    if (b[t] > 0.0) last_positive = t;
  }
  for (int i = 0; i < sample_batch; ++i) {
    const double u = rng.uniform();
    double cum = 0.0;
    env::PedType pick = last_positive;
    for (env::PedType t : env::kAllPedTypes) {
      if (b[t] <= 0.0) continue;
      cum += b[t];
      if (u < cum) {
        pick = t;
        break;
      }
    }
    const auto& q = buf.bucket(pick);
    const BufferEntry& e = q[rng.index(q.size())];
    k.axpy(1.0, e.grad.values.data(), sum.data(), sum.size());
  }
  k.axpy(alpha / static_cast<double>(sample_batch), sum.data(), out.values.data(), sum.size());
  return out;
}

double kl_diag(const net::ActionDist& d1, const net::ActionDist& d2) {
  if (d1.size() != d2.size()) throw UsageError("kl_diag: distributions differ in size");
  double kl = 0.0;
  for (std::size_t a = 0; a < d1.size(); ++a) {
    if (d1.probs[a] <= 0.0) continue;
    if (d2.probs[a] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += d1.probs[a] * (std::log(d1.probs[a]) - std::log(d2.probs[a]));
  }
  return kl;
}

ColaAgent::ColaAgent(std::shared_ptr<const Checkpoint> base,
                     std::shared_ptr<const GradientBuffer> buffer, ColaConfig cc,
                     std::shared_ptr<const TypeConjecturer> conjecturer)
    : base_(std::move(base)),
      buffer_(std::move(buffer)),
      cc_(cc),
      conjecturer_(std::move(conjecturer)),
      theta_(base_->actor),
      window_(static_cast<std::size_t>(cc.window)) {
  cc_.validate();
  if (cc_.belief_mode == BeliefMode::Inferred && !conjecturer_) {
    throw ConfigError("cola: inferred belief mode needs a type conjecturer");
  }
}

void ColaAgent::begin_episode(env::PedType type, std::uint64_t seed) {
  theta_ = base_->actor;
  true_type_ = type;
  rng_ = Rng(derive_seed(seed, Stream::Cola));
  window_.clear();
  segment_obs_.clear();
  trace_.clear();
  steps_ = 0;
}

env::Action ColaAgent::act(const env::State&, const env::Obs& obs, Rng& rng) {
  const net::Sampled s = net::sample_action(net::forward_actor(theta_, obs), rng);
  last_logprob_ = s.logprob;
  segment_obs_.push_back(obs);
  return env::action_from_slot(s.slot);
}

void ColaAgent::observe(const env::State& before, env::Action a_car, env::Action a_ped,
                        const env::StepResult&) {
  window_.push({before, a_car, a_ped});
  ++steps_;
  if (steps_ % cc_.lookahead != 0) return;

  AdaptEvent ev;
  ev.t = steps_;
  ev.belief = update_belief(cc_.belief_mode, window_, true_type_, conjecturer_.get());
  theta_ = cola_adapt_step(theta_, ev.belief, *buffer_, cc_.sample_batch, cc_.step_size, rng_);
  double d2 = 0.0;
  for (std::size_t i = 0; i < theta_.values.size(); ++i) {
    const double d = theta_.values[i] - base_->actor.values[i];
    d2 += d * d;
    ev.theta_sum += theta_.values[i];
  }
  ev.delta_norm = std::sqrt(d2);
  for (const env::Obs& o : segment_obs_) {
    ev.mean_kl += kl_diag(net::forward_actor(base_->actor, o), net::forward_actor(theta_, o));
  }
  if (!segment_obs_.empty()) ev.mean_kl /= static_cast<double>(segment_obs_.size());
  ev.exceeds_delta = ev.mean_kl > cc_.kl_delta;
  segment_obs_.clear();
  trace_.push_back(ev);
}

ColaEpisode run_cola_episode(const env::ScenarioConfig& cfg,
                             std::shared_ptr<const Checkpoint> base,
                             std::shared_ptr<const GradientBuffer> buffer, const ColaConfig& cc,
                             const Opponent& opponent, std::uint64_t seed,
                             std::shared_ptr<const TypeConjecturer> conjecturer) {
  ColaAgent car(base, std::move(buffer), cc, std::move(conjecturer));
  std::unique_ptr<Agent> ped = make_agent(opponent, Role::Pedestrian, cfg);
  env::Crossing crossing(cfg);
  crossing.reset(opponent.type, seed);
  car.begin_episode(opponent.type, seed);
  ped->begin_episode(opponent.type, seed);

  ColaEpisode out;
  train::Trajectory& tau = out.trajectory;
  tau.seed = seed;
  tau.ped_type = opponent.type;
  env::EventKind last = env::EventKind::Timeout;
  while (!crossing.state().terminal) {
    const env::State before = crossing.state();
    const env::Obs obs = env::encode_obs(before, cfg);
    const env::Action ac = car.act(before, obs, crossing.car_rng());
    const double logprob = car.last_logprob();
    const env::Action ap = ped->act(before, obs, crossing.ped_rng());
    const env::StepResult r = crossing.step(ac, ap);
    car.observe(before, ac, ap, r);
    ped->observe(before, ac, ap, r);
    tau.steps.push_back({before, obs, env::slot_of(ac), ac, ap, logprob, r.r_car});
    tau.total_return += r.r_car;
    last = r.event.kind;
  }
  tau.outcome = train::outcome_of(last);
  out.trace = car.trace();
  out.final_theta = car.theta();
  return out;
}

}  // namespace lkmrl::cola
