#include "lkmrl/selftest.hpp"

#include <algorithm>
#include <cmath>

#include "lkmrl/cola.hpp"
#include "lkmrl/env.hpp"
#include "lkmrl/kernels.hpp"
#include "lkmrl/levelk.hpp"
#include "lkmrl/net.hpp"
#include "lkmrl/rng.hpp"

namespace lkmrl::selftest {
namespace {

std::vector<double> random_vector(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-3});
}

// Central difference of f over every parameter against the analytic gradient.
template <class F>
double check_params(net::Params p, const net::Grad& analytic, F f) {
  constexpr double h = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double keep = p.values[i];
    p.values[i] = keep + h;
    const double up = f(p);
    p.values[i] = keep - h;
    const double down = f(p);
    p.values[i] = keep;
    worst = std::max(worst, rel_error(analytic.values[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

}  // namespace

double gradcheck_max_rel_error(int nets, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int k = 0; k < nets; ++k) {
    const int h1 = 4 + static_cast<int>(rng.index(12));
    const int h2 = 3 + static_cast<int>(rng.index(8));
    const int actions = 2 + static_cast<int>(rng.index(3));
    const net::NetShape actor{{12, h1, h2, actions}, net::Head::Softmax};
    const net::NetShape critic{{12, h1, h2, 1}, net::Head::Identity};
    net::Params pa = net::init_params(actor, rng.next());
    net::Params pc = net::init_params(critic, rng.next());
    // Nonzero biases so ReLU boundaries are exercised away from the origin.
    for (double& v : pa.values) v += rng.uniform(-0.05, 0.05);
    for (double& v : pc.values) v += rng.uniform(-0.05, 0.05);
    const std::vector<double> x = random_vector(rng, 12, -1.0, 1.0);
    const int slot = static_cast<int>(rng.index(static_cast<std::uint64_t>(actions)));

    worst = std::max(worst, check_params(pa, net::backward_logprob(pa, x, slot, 1.0),
                                         [&](const net::Params& p) {
                                           return net::forward_actor(p, x).log_probs[slot];
                                         }));
    worst = std::max(worst, check_params(pa, net::backward_entropy(pa, x, 1.0),
                                         [&](const net::Params& p) {
                                           return net::entropy(net::forward_actor(p, x));
                                         }));
    net::Grad gv = net::Grad::zeros(pc.values.size());
    net::accumulate_value_grad(pc, x, 1.0, gv);
    worst = std::max(worst, check_params(pc, gv, [&](const net::Params& p) {
                       return net::forward_critic(p, x);
                     }));
  }
  return worst;
}

double softmax_max_error(int trials, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int k = 0; k < trials; ++k) {
    const double scale = k % 10 == 0 ? 700.0 : 10.0;
    const std::vector<double> z = random_vector(rng, 2 + rng.index(6), -scale, scale);
    const net::ActionDist d = net::softmax(z);
    double sum = 0.0;
    for (double p : d.probs) sum += p;
    worst = std::max(worst, std::abs(sum - 1.0));
  }
  return worst;
}

double kl_min_over_pairs(int pairs, std::uint64_t seed, double* self_max) {
  Rng rng(seed);
  double lo = std::numeric_limits<double>::infinity();
  double self = 0.0;
  for (int k = 0; k < pairs; ++k) {
    const std::size_t n = 2 + rng.index(4);
    const net::ActionDist p = net::softmax(random_vector(rng, n, -5.0, 5.0));
    const net::ActionDist q = net::softmax(random_vector(rng, n, -5.0, 5.0));
    lo = std::min(lo, cola::kl_diag(p, q));
    self = std::max(self, std::abs(cola::kl_diag(p, p)));
  }
  if (self_max) *self_max = self;
  return lo;
}

double adam_zero_grad_drift(std::uint64_t seed) {
  net::Params p = net::init_params(net::NetShape::actor(), seed);
  const net::Params before = p;
  net::AdamState st = net::AdamState::zeros(p.values.size());
  const net::Grad zero = net::Grad::zeros(p.values.size());
  for (int i = 0; i < 5; ++i) net::adam_step(p, zero, st, 1e-2);
  double worst = 0.0;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    worst = std::max(worst, std::abs(p.values[i] - before.values[i]));
  }
  return worst;
}

double kernel_max_mismatch(std::uint64_t seed) {
  const kernels::KernelTable* fast = kernels::avx2();
  if (!fast) return 0.0;
  const kernels::KernelTable& ref = kernels::scalar();
  Rng rng(seed);
  double worst = 0.0;
  auto track = [&](const std::vector<double>& a, const std::vector<double>& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
      worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(a[i])));
    }
  };
  for (std::size_t rows : {1u, 3u, 4u, 7u, 32u, 64u}) {
    for (std::size_t cols : {1u, 5u, 12u, 32u, 64u}) {
      const auto w = random_vector(rng, rows * cols, -1.0, 1.0);
      const auto x = random_vector(rng, cols, -1.0, 1.0);
      const auto d = random_vector(rng, rows, -1.0, 1.0);
      const auto b = random_vector(rng, rows, -1.0, 1.0);
      worst = std::max(worst, std::abs(ref.dot(x.data(), x.data(), cols) -
                                       fast->dot(x.data(), x.data(), cols)));
      std::vector<double> y1(rows), y2(rows);
      ref.affine(w.data(), x.data(), b.data(), y1.data(), rows, cols);
      fast->affine(w.data(), x.data(), b.data(), y2.data(), rows, cols);
      track(y1, y2);
      std::vector<double> o1(cols, 0.5), o2(cols, 0.5);
      ref.affine_transpose_accumulate(w.data(), d.data(), o1.data(), rows, cols);
      fast->affine_transpose_accumulate(w.data(), d.data(), o2.data(), rows, cols);
      track(o1, o2);
      std::vector<double> g1 = w, g2 = w;
      ref.outer_accumulate(d.data(), x.data(), g1.data(), rows, cols);
      fast->outer_accumulate(d.data(), x.data(), g2.data(), rows, cols);
      track(g1, g2);
      std::vector<double> a1 = x, a2 = x;
      ref.axpy(0.3, x.data(), a1.data(), cols);
      fast->axpy(0.3, x.data(), a2.data(), cols);
      track(a1, a2);
    }
  }
  for (std::size_t n : {1u, 3u, 2947u}) {
    const auto g = random_vector(rng, n, -1.0, 1.0);
    std::vector<double> p1 = random_vector(rng, n, -1.0, 1.0), p2 = p1;
    std::vector<double> m1(n, 0.0), m2(n, 0.0), v1(n, 0.0), v2(n, 0.0);
    for (int s = 1; s <= 3; ++s) {
      const double b1 = 1.0 - std::pow(0.9, s), b2 = 1.0 - std::pow(0.999, s);
      ref.adam_ascent(p1.data(), g.data(), m1.data(), v1.data(), n, 1e-3, 0.9, 0.999, 1e-8, b1, b2);
      fast->adam_ascent(p2.data(), g.data(), m2.data(), v2.data(), n, 1e-3, 0.9, 0.999, 1e-8, b1, b2);
    }
    track(p1, p2);
  }
  return worst;
}

long env_invariant_violations(int episodes, std::uint64_t seed) {
  const env::ScenarioConfig cfg;
  env::Crossing crossing(cfg);
  long bad = 0;
  for (int e = 0; e < episodes; ++e) {
    const env::PedType type = env::kAllPedTypes[static_cast<std::size_t>(e) % 3];
    crossing.reset(type, seed + static_cast<std::uint64_t>(e));
    Rng car_choice(derive_seed(seed + static_cast<std::uint64_t>(e), Stream::Trainer));
    int steps = 0;
    while (!crossing.state().terminal) {
      const env::State s = crossing.state();
      const auto ac = env::action_from_slot(static_cast<int>(car_choice.index(3)));
      const auto ap = env::level0_ped_action(type, s, crossing.ped_rng());
      const env::StepResult r = crossing.step(ac, ap);
      const env::State& n = r.next;
      ++steps;
      const double x = env::car_x(n, cfg), y = env::ped_y(n, cfg);
      bad += x < env::car_x(s, cfg) || x > cfg.car_dest;
      bad += y < cfg.ped_y_min || y > cfg.ped_dest;
      bad += n.v_c < 0.0 || n.v_c > cfg.car_vmax;
      bad += n.v_p < cfg.ped_vmin || n.v_p > n.ped_vcap;
      bad += s.ped_arrived && y != env::ped_y(s, cfg);
      bad += (r.event.kind == env::EventKind::Collision) != env::in_conflict_zone(n, cfg);
      bad += n.t != steps;
      const env::Obs o = env::encode_obs(n, cfg);
      for (double v : o) bad += !std::isfinite(v) || std::abs(v) > 7.0 / 6.0 + 1e-12;
    }
    bad += steps > cfg.horizon;
  }
  return bad;
}

std::vector<Check> run_all(std::uint64_t seed) {
  std::vector<Check> out;
  auto add = [&](std::string name, double value, bool ok, std::string detail) {
    out.push_back({std::move(name), ok, value, std::move(detail)});
  };
  const double g = gradcheck_max_rel_error(10, seed);
  add("gradcheck", g, g < 1e-4, "max relative error < 1e-4");
  const double s = softmax_max_error(1000, seed + 1);
  add("softmax_normalization", s, s <= 1e-9, "|sum - 1| <= 1e-9");
  double self = 0.0;
  const double kl = kl_min_over_pairs(10000, seed + 2, &self);
  add("kl_nonnegative", kl, kl >= 0.0, "min KL(p||q) >= 0");
  add("kl_self_zero", self, self == 0.0, "KL(p||p) == 0");
  const double a = adam_zero_grad_drift(seed + 3);
  add("adam_zero_grad", a, a == 0.0, "no drift under zero gradients");
  const double k = kernel_max_mismatch(seed + 4);
  add("kernel_equivalence", k, k <= 1e-12, std::string("scalar vs ") + kernels::active().name);
  const long v = env_invariant_violations(300, seed + 5);
  add("env_invariants", static_cast<double>(v), v == 0, "violations over 300 episodes");
  const double b1 = levelk::beauty_contest_check(1), b2 = levelk::beauty_contest_check(2);
  add("beauty_contest", b2, b1 == 25.0 && b2 == 12.5, "k=1 -> 25, k=2 -> 12.5");
  return out;
}

}  // namespace lkmrl::selftest
