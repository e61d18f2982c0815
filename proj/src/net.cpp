#include "lkmrl/net.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lkmrl/errors.hpp"
#include "lkmrl/kernels.hpp"

namespace lkmrl::net {
namespace {

struct LayerView {
  std::size_t n_in;
  std::size_t n_out;
  std::size_t w_offset;
  std::size_t b_offset;
};

// Per-thread scratch; forward/backward never allocate after warm-up.
struct Workspace {
  std::vector<LayerView> layers;
  // act[0] is the input; act[l+1] is the post-activation of layer l (the raw
  // output for the last layer). pre[l] is layer l before ReLU.
  std::vector<std::vector<double>> act;
  std::vector<std::vector<double>> pre;
  std::vector<double> delta;
  std::vector<double> delta_prev;
};

Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

void layout(const NetShape& shape, std::vector<LayerView>& out) {
  out.clear();
  std::size_t off = 0;
  for (std::size_t l = 0; l + 1 < shape.sizes.size(); ++l) {
    const auto n_in = static_cast<std::size_t>(shape.sizes[l]);
    const auto n_out = static_cast<std::size_t>(shape.sizes[l + 1]);
    out.push_back({n_in, n_out, off, off + n_in * n_out});
    off += n_in * n_out + n_out;
  }
}

Workspace& run_forward(const Params& p, std::span<const double> x) {
  if (x.size() != static_cast<std::size_t>(p.shape.input_size())) {
    throw UsageError("forward: input has " + std::to_string(x.size()) +
                     " components, network expects " +
                     std::to_string(p.shape.input_size()));
  }
  if (!all_finite(x)) throw NumericError("forward: non-finite input");
  if (p.values.size() != p.shape.param_count()) {
    throw UsageError("forward: parameter vector does not match its shape");
  }
  const auto& k = kernels::active();
  Workspace& ws = workspace();
  layout(p.shape, ws.layers);
  const std::size_t n_layers = ws.layers.size();
  ws.act.resize(n_layers + 1);
  ws.pre.resize(n_layers);
  ws.act[0].assign(x.begin(), x.end());
  const double* w = p.values.data();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const LayerView& L = ws.layers[l];
    ws.pre[l].resize(L.n_out);
    k.affine(w + L.w_offset, ws.act[l].data(), w + L.b_offset, ws.pre[l].data(),
             L.n_out, L.n_in);
    ws.act[l + 1] = ws.pre[l];
    if (l + 1 < n_layers) {
      for (double& v : ws.act[l + 1]) v = v > 0.0 ? v : 0.0;
    }
  }
  return ws;
}

// Back-propagates ws.delta (gradient w.r.t. the raw output) into out.
void run_backward(const Params& p, Workspace& ws, Grad& out) {
  if (out.values.size() != p.values.size()) {
    throw UsageError("backward: gradient length does not match parameters");
  }
  const auto& k = kernels::active();
  const double* w = p.values.data();
  double* g = out.values.data();
  for (std::size_t l = ws.layers.size(); l-- > 0;) {
    const LayerView& L = ws.layers[l];
    k.outer_accumulate(ws.delta.data(), ws.act[l].data(), g + L.w_offset, L.n_out,
                       L.n_in);
    k.axpy(1.0, ws.delta.data(), g + L.b_offset, L.n_out);
    if (l == 0) break;
    ws.delta_prev.assign(L.n_in, 0.0);
    k.affine_transpose_accumulate(w + L.w_offset, ws.delta.data(),
                                  ws.delta_prev.data(), L.n_out, L.n_in);
    const std::vector<double>& z = ws.pre[l - 1];
    for (std::size_t i = 0; i < L.n_in; ++i) {
      if (z[i] <= 0.0) ws.delta_prev[i] = 0.0;
    }
    std::swap(ws.delta, ws.delta_prev);
  }
}

void require_head(const Params& p, Head head, const char* what) {
  if (p.shape.head != head) throw UsageError(std::string(what) + ": wrong network head");
}

}  // namespace

NetShape NetShape::actor(int actions) { return NetShape{{12, 64, 32, actions}, Head::Softmax}; }
NetShape NetShape::critic() { return NetShape{{12, 64, 32, 1}, Head::Identity}; }

std::size_t NetShape::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    n += static_cast<std::size_t>(sizes[l]) * sizes[l + 1] + sizes[l + 1];
  }
  return n;
}

void NetShape::validate() const {
  if (sizes.size() < 2) throw ConfigError("net shape: need at least two layer sizes");
  if (sizes.front() != 12) throw ConfigError("net shape: input size must be 12");
  for (int s : sizes) {
    if (s <= 0) throw ConfigError("net shape: layer sizes must be positive");
  }
  if (head == Head::Identity && sizes.back() != 1) {
    throw ConfigError("net shape: value head must have one output");
  }
  if (head == Head::Softmax && sizes.back() < 2) {
    throw ConfigError("net shape: softmax head needs >= 2 outputs");
  }
}

void to_json(nlohmann::json& j, const NetShape& s) {
  j = nlohmann::json{{"sizes", s.sizes},
                     {"head", s.head == Head::Softmax ? "softmax" : "identity"}};
}

void from_json(const nlohmann::json& j, NetShape& s) {
  s.sizes = j.at("sizes").get<std::vector<int>>();
  const std::string head = j.at("head").get<std::string>();
  if (head == "softmax") {
    s.head = Head::Softmax;
  } else if (head == "identity") {
    s.head = Head::Identity;
  } else {
    throw ConfigError("net shape: unknown head '" + head + "'");
  }
  s.validate();
}

Grad& Grad::operator+=(const Grad& other) {
  if (other.values.size() != values.size()) throw UsageError("grad: length mismatch");
  kernels::active().axpy(1.0, other.values.data(), values.data(), values.size());
  return *this;
}

Grad& Grad::operator*=(double s) {
  for (double& v : values) v *= s;
  return *this;
}

Params init_params(const NetShape& shape, std::uint64_t seed) {
  shape.validate();
  Params p = zero_params(shape);
  std::vector<LayerView> layers;
  layout(shape, layers);
  Rng rng(derive_seed(seed, Stream::Init));
  for (const LayerView& L : layers) {
    const double bound = std::sqrt(6.0 / static_cast<double>(L.n_in));
    for (std::size_t i = 0; i < L.n_in * L.n_out; ++i) {
      p.values[L.w_offset + i] = rng.uniform(-bound, bound);
    }
  }
  return p;
}

Params zero_params(const NetShape& shape) {
  shape.validate();
  return Params{shape, std::vector<double>(shape.param_count(), 0.0)};
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

ActionDist softmax(std::span<const double> logits) {
  ActionDist d;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double log_sum = std::log(sum);
  d.probs.resize(logits.size());
  d.log_probs.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    d.log_probs[i] = logits[i] - mx - log_sum;
    d.probs[i] = std::exp(d.log_probs[i]);
  }
  return d;
}

std::vector<double> forward_raw(const Params& p, std::span<const double> x) {
  Workspace& ws = run_forward(p, x);
  return ws.act.back();
}

ActionDist forward_actor(const Params& p, std::span<const double> x) {
  require_head(p, Head::Softmax, "forward_actor");
  Workspace& ws = run_forward(p, x);
  ActionDist d = softmax(ws.act.back());
  if (!all_finite(d.log_probs)) throw NumericError("forward_actor: non-finite output");
  return d;
}

double forward_critic(const Params& p, std::span<const double> x) {
  require_head(p, Head::Identity, "forward_critic");
  Workspace& ws = run_forward(p, x);
  const double v = ws.act.back()[0];
  if (!std::isfinite(v)) throw NumericError("forward_critic: non-finite output");
  return v;
}

Sampled sample_action(const ActionDist& d, double u) {
  double cum = 0.0;
  const std::size_t last = d.size() - 1;
  for (std::size_t i = 0; i < last; ++i) {
    cum += d.probs[i];
    if (u < cum) return {static_cast<int>(i), d.log_probs[i]};
  }
  // Skip trailing zero-probability slots if rounding left u past the end.
  std::size_t i = last;
  while (i > 0 && d.probs[i] == 0.0) --i;
  return {static_cast<int>(i), d.log_probs[i]};
}

Sampled sample_action(const ActionDist& d, Rng& rng) { return sample_action(d, rng.uniform()); }

double entropy(const ActionDist& d) {
  double h = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.probs[i] > 0.0) h -= d.probs[i] * d.log_probs[i];
  }
  return h;
}

void accumulate_logprob_grad(const Params& p, std::span<const double> x, int slot,
                             double scale, Grad& out) {
  require_head(p, Head::Softmax, "backward_logprob");
  if (scale == 0.0) return;
  Workspace& ws = run_forward(p, x);
  const ActionDist d = softmax(ws.act.back());
  if (slot < 0 || static_cast<std::size_t>(slot) >= d.size()) {
    throw UsageError("backward_logprob: action slot out of range");
  }
  ws.delta.resize(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    ws.delta[i] = scale * ((static_cast<int>(i) == slot ? 1.0 : 0.0) - d.probs[i]);
  }
  run_backward(p, ws, out);
}

Grad backward_logprob(const Params& p, std::span<const double> x, int slot, double scale) {
  Grad g = Grad::zeros(p.values.size());
  accumulate_logprob_grad(p, x, slot, scale, g);
  return g;
}

void accumulate_entropy_grad(const Params& p, std::span<const double> x, double scale,
                             Grad& out) {
  require_head(p, Head::Softmax, "backward_entropy");
  if (scale == 0.0) return;
  Workspace& ws = run_forward(p, x);
  const ActionDist d = softmax(ws.act.back());
  const double h = entropy(d);
  ws.delta.resize(d.size());
  // dH/dz_k = -p_k (ln p_k + H)
  for (std::size_t i = 0; i < d.size(); ++i) {
    ws.delta[i] = -scale * d.probs[i] * (d.log_probs[i] + h);
  }
  run_backward(p, ws, out);
}

Grad backward_entropy(const Params& p, std::span<const double> x, double scale) {
  Grad g = Grad::zeros(p.values.size());
  accumulate_entropy_grad(p, x, scale, g);
  return g;
}

void accumulate_value_grad(const Params& p, std::span<const double> x, double scale,
                           Grad& out) {
  require_head(p, Head::Identity, "value_grad");
  if (scale == 0.0) return;
  Workspace& ws = run_forward(p, x);
  ws.delta.assign(1, scale);
  run_backward(p, ws, out);
}

void adam_step(Params& p, const Grad& g, AdamState& st, double lr, const AdamConfig& cfg) {
  const std::size_t n = p.values.size();
  if (g.values.size() != n || st.m.size() != n || st.v.size() != n) {
    throw UsageError("adam_step: length mismatch between params, grad and state");
  }
  st.step += 1;
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  kernels::active().adam_ascent(p.values.data(), g.values.data(), st.m.data(),
                                st.v.data(), n, lr, cfg.beta1, cfg.beta2, cfg.eps,
                                bias1, bias2);
}

}  // namespace lkmrl::net
