#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lkmrl/agents.hpp"
#include "lkmrl/checkpoint.hpp"
#include "lkmrl/env.hpp"
#include "lkmrl/net.hpp"
#include "lkmrl/train.hpp"

// Conjectural online lookahead adaptation. While driving, every L steps the
// car forms a belief over the pedestrian type and moves its parameters by the
// belief-weighted mean of policy gradients stored while rolling out the base
// policy against each type.

namespace lkmrl::cola {

inline constexpr std::size_t kTypeCount = 3;

struct Belief {
  std::array<double, kTypeCount> p{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};

  static Belief uniform() { return Belief{}; }
  static Belief one_hot(env::PedType t);

  double operator[](env::PedType t) const { return p[env::index_of(t)]; }
  env::PedType argmax() const;
  bool valid(double tol = 1e-9) const;
};

enum class BeliefMode { Oracle, Inferred };

struct ColaConfig {
  int lookahead = 10;              // L: adapt every L steps
  int sample_batch = 256;          // D: gradients drawn per adaptation
  double step_size = 1e-3;         // alpha
  std::size_t capacity = 500;      // stored gradients per type
  BeliefMode belief_mode = BeliefMode::Oracle;
  int episodes_per_type = 1000;    // buffer-fill rollouts per type
  int segment_length = 10;         // steps per stored gradient estimate
  double gamma = 0.99;             // discount of the truncated return-to-go
  int window = 50;                 // ObsWindow length for the conjecturer
  double kl_delta = 0.01;          // trust-region size reported by telemetry

  static ColaConfig mode1_preset() { return ColaConfig{}; }
  static ColaConfig large_buffer_preset() {
    ColaConfig c;
    c.capacity = 1000;
    return c;
  }

  void validate() const;
};

void to_json(nlohmann::json& j, const ColaConfig& c);
void from_json(const nlohmann::json& j, ColaConfig& c);

struct BufferEntry {
  env::PedType type = env::PedType::T1_Random;
  std::uint32_t episode = 0;
  std::uint32_t segment = 0;
  net::Grad grad;
};

/// Type-labeled gradient store with per-type capacity; the oldest entry of a
/// type is evicted first.
class GradientBuffer {
 public:
  GradientBuffer(std::size_t grad_length, std::size_t capacity_per_type,
                 std::string base_hash = "", int segment_length = 10);

  void add(BufferEntry e);

  const std::deque<BufferEntry>& bucket(env::PedType t) const {
    return buckets_[env::index_of(t)];
  }
  std::size_t count(env::PedType t) const { return bucket(t).size(); }
  std::size_t grad_length() const { return grad_length_; }
  std::size_t capacity() const { return capacity_; }
  const std::string& base_hash() const { return base_hash_; }
  int segment_length() const { return segment_length_; }

  /// Binary container: magic, JSON header {base checkpoint hash, segment
  /// length, per-type counts, ...}, then per-entry {type, episode, segment,
  /// gradient}.
  void save(const std::filesystem::path& path) const;
  /// Throws ConfigError if the stored base hash differs from `expected_base_hash`.
  static GradientBuffer load(const std::filesystem::path& path,
                             const std::string& expected_base_hash);

 private:
  std::size_t grad_length_;
  std::size_t capacity_;
  std::string base_hash_;
  int segment_length_;
  std::array<std::deque<BufferEntry>, kTypeCount> buckets_;
};

/// For each contiguous segment: sum_{t in seg} G_t^seg grad ln pi(a_t|s_t),
/// where G_t^seg is the discounted return-to-go truncated at the segment end.
std::vector<net::Grad> segment_gradients(const train::Trajectory& tau, const net::Params& actor,
                                         int segment_length, double gamma);

/// Rolls out the frozen base car against each opponent type and stores its
/// segment gradients. `opponents` gives one opponent per type.
GradientBuffer fill_gradient_buffer(const env::ScenarioConfig& cfg, const Checkpoint& base,
                                    const ColaConfig& cc, const std::vector<Opponent>& opponents,
                                    std::uint64_t seed);

struct ObsRecord {
  env::State state;
  env::Action a_car = env::Action::Cruise;
  env::Action a_ped = env::Action::Cruise;
};

/// Most recent (s_t, a_car, a_ped) records, oldest first.
class ObsWindow {
 public:
  explicit ObsWindow(std::size_t max_length = 50) : max_(max_length) {}

  void push(const ObsRecord& r);
  void clear() { records_.clear(); }
  bool empty() const { return records_.empty(); }
  std::size_t size() const { return records_.size(); }
  std::size_t max_length() const { return max_; }
  const std::deque<ObsRecord>& records() const { return records_; }

 private:
  std::size_t max_;
  std::deque<ObsRecord> records_;
};

/// (mean pedestrian speed, speed variance, Decel/Cruise/Accel frequencies).
using Features = std::array<double, 5>;
Features window_features(const ObsWindow& w);

/// Nearest-centroid type conjecture. Evidence scales with window length, so a
/// single record yields a nearly uniform belief.
class TypeConjecturer {
 public:
  TypeConjecturer(std::array<Features, kTypeCount> centroids, Features scales, int window);

  /// Centroids from windows of scripted pedestrians facing the level-0 car.
  static TypeConjecturer fit(const env::ScenarioConfig& cfg, int window, int episodes_per_type,
                             std::uint64_t seed);

  Belief infer(const ObsWindow& w) const;

  const std::array<Features, kTypeCount>& centroids() const { return centroids_; }
  const Features& scales() const { return scales_; }
  int window() const { return window_; }

 private:
  std::array<Features, kTypeCount> centroids_;
  Features scales_;
  int window_;
};

Belief infer_type(const ObsWindow& w, const TypeConjecturer& conjecturer);

/// Oracle: one-hot at `true_type` (UsageError if absent). Inferred: the
/// conjecturer's belief (UsageError if null).
Belief update_belief(BeliefMode mode, const ObsWindow& w, std::optional<env::PedType> true_type,
                     const TypeConjecturer* conjecturer);

/// theta + alpha * mean of D gradients, each drawn by sampling a type from
/// the belief and then a stored gradient of that type uniformly.
net::Params cola_adapt_step(const net::Params& theta, const Belief& b, const GradientBuffer& buf,
                            int sample_batch, double alpha, Rng& rng);

/// KL(d1 || d2); +infinity when d2 is zero where d1 is positive.
double kl_diag(const net::ActionDist& d1, const net::ActionDist& d2);

struct AdaptEvent {
  int t = 0;  // steps taken when the update fired
  Belief belief;
  double delta_norm = 0.0;  // ||theta_t - theta_base||
  double theta_sum = 0.0;
  double mean_kl = 0.0;     // base vs adapted policy over the last segment's states
  bool exceeds_delta = false;

  bool operator==(const AdaptEvent& o) const {
    return t == o.t && belief.p == o.belief.p && delta_norm == o.delta_norm &&
           theta_sum == o.theta_sum && mean_kl == o.mean_kl && exceeds_delta == o.exceeds_delta;
  }
};

/// Car agent running COLA. Adaptation is episode-local: begin_episode resets
/// the parameters to the base checkpoint.
class ColaAgent final : public Agent {
 public:
  ColaAgent(std::shared_ptr<const Checkpoint> base, std::shared_ptr<const GradientBuffer> buffer,
            ColaConfig cc, std::shared_ptr<const TypeConjecturer> conjecturer = nullptr);

  void begin_episode(env::PedType type, std::uint64_t seed) override;
  env::Action act(const env::State& s, const env::Obs& obs, Rng& rng) override;
  void observe(const env::State& before, env::Action a_car, env::Action a_ped,
               const env::StepResult& result) override;

  const net::Params& theta() const { return theta_; }
  const std::vector<AdaptEvent>& trace() const { return trace_; }
  double last_logprob() const { return last_logprob_; }

 private:
  std::shared_ptr<const Checkpoint> base_;
  std::shared_ptr<const GradientBuffer> buffer_;
  ColaConfig cc_;
  std::shared_ptr<const TypeConjecturer> conjecturer_;
  net::Params theta_;
  env::PedType true_type_ = env::PedType::T1_Random;
  Rng rng_;
  ObsWindow window_;
  std::vector<env::Obs> segment_obs_;
  std::vector<AdaptEvent> trace_;
  int steps_ = 0;
  double last_logprob_ = 0.0;
};

struct ColaEpisode {
  train::Trajectory trajectory;
  std::vector<AdaptEvent> trace;
  net::Params final_theta;
};

/// One COLA episode of the base car against `opponent` (its `type` is the
/// true pedestrian type).
ColaEpisode run_cola_episode(const env::ScenarioConfig& cfg,
                             std::shared_ptr<const Checkpoint> base,
                             std::shared_ptr<const GradientBuffer> buffer, const ColaConfig& cc,
                             const Opponent& opponent, std::uint64_t seed,
                             std::shared_ptr<const TypeConjecturer> conjecturer = nullptr);

}  // namespace lkmrl::cola
