#pragma once

// Named example models and a seeded random model generator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "detpol/error.hpp"
#include "detpol/lyapunov.hpp"
#include "detpol/measure.hpp"
#include "detpol/model.hpp"

namespace detpol {

// Uniform double in [0,1) from the top 53 bits of a 64-bit Mersenne twister draw.
class Uniform01 {
 public:
  explicit Uniform01(std::uint64_t seed) : gen_(seed) {}
  double operator()() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  double operator()(double lo, double hi) { return lo + (hi - lo) * (*this)(); }
  std::uint64_t bits() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

// One cell, actions {0, 1}, immediate absorption, r(x, a) = a.
inline AtomlessMDP unit_interval_onestep() {
  AtomlessMDP::Spec s;
  s.actions = 2;
  s.available = {{0, 1}};
  s.kernel = {{KernelRow{PieceMeasure(), 1.0}, KernelRow{PieceMeasure(), 1.0}}};
  s.rewards = {{{0.0}, {1.0}}};
  return AtomlessMDP(std::move(s));
}

inline std::size_t example_3_12_cell(int i, std::size_t j) { return (std::size_t{1} << i) - 1 + j; }

// Truncation of the continue/stop example: state (i, j), i <= n_max, j < 2^i, gets its own
// cell. Action 0 continues (from (i, 0) only), action 1 stops. The reward counts time steps,
// so performance is E T. Continuing at (n_max, 0) returns to (n_max, 0).
inline AtomlessMDP example_3_12(int n_max) {
  if (n_max < 0 || n_max > 16) throw DomainError("example-3.12: n_max must be in [0, 16]");
  const std::size_t K = (std::size_t{1} << (n_max + 1)) - 1;
  AtomlessMDP::Spec s;
  s.grid = StatePartition::uniform(K);
  s.actions = 2;
  s.note = "absorbing, uniform-absorption certificate holds for truncation only (finite truncation of a countable-state example; each state is an interval of equal length)";
  auto at = [&](std::size_t cell, double mass) {
    std::vector<double> t{0.0};
    std::vector<double> w;
    if (cell > 0) {
      t.push_back(s.grid.lo(cell));
      w.push_back(0.0);
    }
    t.push_back(s.grid.hi(cell));
    w.push_back(mass);
    if (cell + 1 < K) {
      t.push_back(1.0);
      w.push_back(0.0);
    }
    return PieceMeasure(StatePartition(std::move(t)), std::move(w));
  };
  s.available.resize(K);
  s.kernel.resize(K);
  s.rewards.assign(K, {{1.0}, {1.0}});
  for (int i = 0; i <= n_max; ++i) {
    const std::size_t len = std::size_t{1} << i;
    for (std::size_t j = 0; j < len; ++j) {
      const std::size_t c = example_3_12_cell(i, j);
      KernelRow cont{PieceMeasure(), 1.0};
      KernelRow stop{PieceMeasure(), 1.0};
      if (j == 0) {
        const std::size_t next = i < n_max ? example_3_12_cell(i + 1, 0) : c;
        cont = KernelRow{at(next, 0.5), 0.5};
        s.available[c] = {0, 1};
      } else {
        s.available[c] = {1};
      }
      if (j + 1 < len) stop = KernelRow{at(c + 1, 1.0), 0.0};
      s.kernel[c] = {cont, stop};
    }
  }
  s.initial = at(0, 1.0);
  return AtomlessMDP(std::move(s));
}

// φ^n: continue at (i, 0) for i < n, stop at (n, 0). n > n_max gives φ^∞.
inline DeterministicPolicy example_3_12_policy(const AtomlessMDP& m, int n) {
  DeterministicPolicy p{m.grid(), std::vector<int>(m.cells(), 1)};
  for (int i = 0; example_3_12_cell(i, 0) < m.cells(); ++i) p.actions[example_3_12_cell(i, 0)] = i < n ? 0 : 1;
  return p;
}

struct RandomModelOptions {
  std::size_t cells = 8;
  int actions = 3;
  int criteria = 2;
  double absorb_lo = 0.2;
  double absorb_hi = 0.6;
  // Split destinations inside cells so the measure grid is finer than the base grid.
  bool fine_destinations = false;
};

// Uniformly absorbing random model: every available row absorbs at least `absorb_lo`.
inline AtomlessMDP random_model(std::uint64_t seed, RandomModelOptions opt = {}) {
  Uniform01 u(seed);
  const std::size_t M = opt.cells;
  const std::size_t A = static_cast<std::size_t>(opt.actions);
  AtomlessMDP::Spec s;

  std::vector<double> gaps(M);
  double total = 0.0;
  for (double& g : gaps) total += (g = 0.5 + u());
  std::vector<double> t{0.0};
  double acc = 0.0;
  for (std::size_t k = 0; k + 1 < M; ++k) t.push_back((acc += gaps[k]) / total);
  t.push_back(1.0);
  s.grid = StatePartition(std::move(t));
  s.actions = opt.actions;

  auto random_measure = [&](const StatePartition& p, double mass) {
    std::vector<double> w(p.size());
    double sum = 0.0;
    for (double& x : w) sum += (x = u() < 0.25 ? 0.0 : u());
    if (sum == 0.0) {
      w[static_cast<std::size_t>(u() * static_cast<double>(w.size())) % w.size()] = 1.0;
      sum = 1.0;
    }
    for (double& x : w) x *= mass / sum;
    return PieceMeasure(p, std::move(w));
  };
  auto destination_partition = [&]() {
    if (!opt.fine_destinations) return s.grid;
    StatePartition p = s.grid;
    for (std::size_t k = 0; k < 2; ++k) p = with_breakpoint(p, u(0.01, 0.99));
    return p;
  };

  s.available.resize(M);
  s.kernel.resize(M);
  s.rewards.resize(M);
  for (std::size_t c = 0; c < M; ++c) {
    for (std::size_t a = 0; a < A; ++a)
      if (u() < 0.75) s.available[c].push_back(static_cast<int>(a));
    if (s.available[c].empty()) s.available[c].push_back(static_cast<int>(u() * static_cast<double>(A)) % opt.actions);
    for (std::size_t a = 0; a < A; ++a) {
      const double absorb = u(opt.absorb_lo, opt.absorb_hi);
      PieceMeasure dest = random_measure(destination_partition(), 1.0 - absorb);
      s.kernel[c].push_back(KernelRow{dest, std::max(0.0, 1.0 - dest.total())});
      std::vector<double> r(static_cast<std::size_t>(opt.criteria));
      for (double& x : r) x = u(-1.0, 1.0);
      s.rewards[c].push_back(std::move(r));
    }
  }
  s.initial = random_measure(s.grid, 1.0);
  s.initial = s.initial.scaled(1.0 / s.initial.total());
  return AtomlessMDP(std::move(s));
}

// Deterministic policy on the base grid refined by `extra` random breakpoints.
inline DeterministicPolicy random_deterministic_policy(const AtomlessMDP& m, Uniform01& u, std::size_t extra = 0) {
  StatePartition p = m.grid();
  for (std::size_t k = 0; k < extra; ++k) p = with_breakpoint(p, u(0.001, 0.999));
  auto cell = parent_intervals(p, m.grid());
  DeterministicPolicy phi{p, {}};
  for (std::size_t k = 0; k < p.size(); ++k) {
    auto acts = actions_of(m.available(cell[k]));
    phi.actions.push_back(acts[static_cast<std::size_t>(u() * static_cast<double>(acts.size())) % acts.size()]);
  }
  return phi;
}

inline StationaryPolicy random_stationary_policy(const AtomlessMDP& m, Uniform01& u, std::size_t extra = 0) {
  StatePartition p = m.grid();
  for (std::size_t k = 0; k < extra; ++k) p = with_breakpoint(p, u(0.001, 0.999));
  auto cell = parent_intervals(p, m.grid());
  StationaryPolicy pi{p, {}};
  for (std::size_t k = 0; k < p.size(); ++k) {
    std::vector<double> probs(static_cast<std::size_t>(m.actions()), 0.0);
    double sum = 0.0;
    for (int a : actions_of(m.available(cell[k]))) sum += (probs[static_cast<std::size_t>(a)] = 0.05 + u());
    for (double& x : probs) x /= sum;
    pi.probs.push_back(std::move(probs));
  }
  return pi;
}

// One-step model of r = (1, 2x) under Lebesgue measure on `cells` equal intervals.
inline AtomlessMDP lyapunov_onestep(std::size_t cells = 64) { return as_onestep_mdp(linear_density_example(cells)); }

// "unit-interval-onestep", "example-3.12[:n_max]" (default 10), "lyapunov-onestep[:cells]" (default 64).
inline AtomlessMDP builtin(const std::string& spec) {
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  long arg = -1;
  if (colon != std::string::npos) {
    const std::string a = spec.substr(colon + 1);
    std::size_t used = 0;
    try {
      arg = std::stol(a, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != a.size() || arg < 0) throw DomainError("builtin: bad parameter '" + a + "'");
  }
  if (name == "unit-interval-onestep" && colon == std::string::npos) return unit_interval_onestep();
  if (name == "example-3.12") return example_3_12(arg < 0 ? 10 : static_cast<int>(arg));
  if (name == "lyapunov-onestep") {
    if (arg == 0 || arg > (1 << 16)) throw DomainError("builtin: lyapunov-onestep needs 1..65536 cells");
    return lyapunov_onestep(arg < 0 ? 64 : static_cast<std::size_t>(arg));
  }
  throw DomainError("unknown builtin model '" + spec + "'");
}

}  // namespace detpol
