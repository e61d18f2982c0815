#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "lkmrl/rng.hpp"

namespace lkmrl::net {

enum class Head { Softmax, Identity };

/// Fully connected ReLU network. Parameters are stored layer by layer as a
/// row-major weight block (n_out x n_in) followed by the bias block.
struct NetShape {
  std::vector<int> sizes;
  Head head = Head::Softmax;

  static NetShape actor(int actions = 3);  // 12x64x32xA, softmax
  static NetShape critic();                // 12x64x32x1, identity

  std::size_t layer_count() const { return sizes.size() - 1; }
  std::size_t param_count() const;
  int input_size() const { return sizes.front(); }
  int output_size() const { return sizes.back(); }

  /// Throws ConfigError unless sizes.front() == 12, >= 2 sizes, all positive.
  void validate() const;

  bool operator==(const NetShape&) const = default;
};

void to_json(nlohmann::json& j, const NetShape& s);
void from_json(const nlohmann::json& j, NetShape& s);

struct Params {
  NetShape shape;
  std::vector<double> values;

  bool operator==(const Params&) const = default;
};

struct Grad {
  std::vector<double> values;

  static Grad zeros(std::size_t n) { return Grad{std::vector<double>(n, 0.0)}; }
  std::size_t size() const { return values.size(); }
  Grad& operator+=(const Grad& other);
  Grad& operator*=(double s);
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;

  static AdamState zeros(std::size_t n) {
    return AdamState{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0};
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct ActionDist {
  std::vector<double> probs;
  std::vector<double> log_probs;

  std::size_t size() const { return probs.size(); }
};

struct Sampled {
  int slot = 0;
  double logprob = 0.0;
};

/// He-uniform weights in [-sqrt(6/fan_in), sqrt(6/fan_in)], zero biases.
Params init_params(const NetShape& shape, std::uint64_t seed);

Params zero_params(const NetShape& shape);

/// Throws NumericError on non-finite input; UsageError on a size mismatch.
ActionDist forward_actor(const Params& p, std::span<const double> x);
double forward_critic(const Params& p, std::span<const double> x);

/// Raw output layer (logits for the actor).
std::vector<double> forward_raw(const Params& p, std::span<const double> x);

ActionDist softmax(std::span<const double> logits);

/// Inverse-CDF draw from one uniform, so nearby distributions fed the same
/// stream mostly pick the same action.
Sampled sample_action(const ActionDist& d, Rng& rng);
Sampled sample_action(const ActionDist& d, double u);

double entropy(const ActionDist& d);

/// out += scale * d/dtheta ln pi(slot | x).
void accumulate_logprob_grad(const Params& p, std::span<const double> x, int slot,
                             double scale, Grad& out);
Grad backward_logprob(const Params& p, std::span<const double> x, int slot,
                      double scale);

/// out += scale * d/dtheta H(pi(. | x)).
void accumulate_entropy_grad(const Params& p, std::span<const double> x,
                             double scale, Grad& out);
Grad backward_entropy(const Params& p, std::span<const double> x, double scale);

/// out += scale * d/dtheta V(x) for an identity-head network.
void accumulate_value_grad(const Params& p, std::span<const double> x,
                           double scale, Grad& out);

/// Adam step in the ascent direction: parameters move along +g.
void adam_step(Params& p, const Grad& g, AdamState& st, double lr,
               const AdamConfig& cfg = {});

bool all_finite(std::span<const double> v);

}  // namespace lkmrl::net
