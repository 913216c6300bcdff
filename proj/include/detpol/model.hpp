#pragma once

// Finite-action MDP on X = [0,1] with an absorbing sink, piecewise-constant kernels and
// rewards, and the policy types that act on it.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "detpol/error.hpp"
#include "detpol/measure.hpp"

namespace detpol {

inline constexpr double kMassTolerance = 1e-12;

enum class ModelKind { absorbing, discounted };

// Transition law from one base cell under one action: a measure on X plus the mass sent to the sink.
struct KernelRow {
  PieceMeasure dest;
  double absorb = 1.0;
};

// Bitmask over the action alphabet (at most 64 actions).
using ActionSet = std::uint64_t;

inline constexpr int kMaxActions = 64;
inline bool has_action(ActionSet s, int a) noexcept { return (s >> a) & 1u; }
inline ActionSet single_action(int a) noexcept { return ActionSet{1} << a; }
inline int lowest_action(ActionSet s) noexcept { return std::countr_zero(s); }
inline int action_count(ActionSet s) noexcept { return std::popcount(s); }

inline std::vector<int> actions_of(ActionSet s) {
  std::vector<int> out;
  for (int a = 0; a < kMaxActions; ++a)
    if (has_action(s, a)) out.push_back(a);
  return out;
}

class AtomlessMDP {
 public:
  struct Spec {
    StatePartition grid;
    int actions = 1;
    std::vector<std::vector<int>> available;                  // [cell] -> actions
    std::vector<std::vector<KernelRow>> kernel;               // [cell][action]
    std::vector<std::vector<std::vector<double>>> rewards;    // [cell][action] -> R^N
    PieceMeasure initial = PieceMeasure::uniform();
    ModelKind kind = ModelKind::absorbing;
    double beta = 0.0;
    std::string note;
  };

  // Alive-mass row on the measure grid, already in absorbing form (discounting folded in).
  struct FineRow {
    std::vector<std::pair<std::uint32_t, double>> entries;
    double alive = 0.0;
  };

  explicit AtomlessMDP(Spec spec) : spec_(std::move(spec)) {
    validate();
    derive();
  }

  const Spec& spec() const noexcept { return spec_; }
  const StatePartition& grid() const noexcept { return spec_.grid; }
  std::size_t cells() const noexcept { return spec_.grid.size(); }
  int actions() const noexcept { return spec_.actions; }
  int criteria() const noexcept { return criteria_; }
  ModelKind kind() const noexcept { return spec_.kind; }
  double beta() const noexcept { return spec_.beta; }
  const std::string& note() const noexcept { return spec_.note; }

  ActionSet available(std::size_t cell) const noexcept { return available_[cell]; }
  bool available(std::size_t cell, int a) const noexcept { return has_action(available_[cell], a); }
  const KernelRow& kernel(std::size_t cell, int a) const { return spec_.kernel[cell][static_cast<std::size_t>(a)]; }
  const std::vector<double>& reward(std::size_t cell, int a) const {
    return spec_.rewards[cell][static_cast<std::size_t>(a)];
  }
  const PieceMeasure& initial() const noexcept { return spec_.initial; }

  // Common refinement of the base grid, every kernel destination partition and the initial partition.
  // Every state marginal of every policy has constant density on each of its intervals.
  const StatePartition& measure_grid() const noexcept { return measure_grid_; }
  std::size_t cell_of_fine(std::size_t f) const noexcept { return cell_of_fine_[f]; }
  const std::vector<double>& initial_fine() const noexcept { return initial_fine_; }
  const FineRow& fine_row(std::size_t cell, int a) const noexcept {
    return fine_rows_[cell * static_cast<std::size_t>(spec_.actions) + static_cast<std::size_t>(a)];
  }

  // max over available (cell, action, criterion) of |r|.
  double reward_bound() const noexcept { return reward_bound_; }

 private:
  void validate() {
    auto& s = spec_;
    const std::size_t M = s.grid.size();
    if (s.actions < 1 || s.actions > kMaxActions) throw ValidationError("actions", "action count must be in [1, 64]");
    if (s.available.size() != M) throw ValidationError("available", "expected one action list per grid cell");
    if (s.kernel.size() != M) throw ValidationError("kernel", "expected one row list per grid cell");
    if (s.rewards.size() != M) throw ValidationError("rewards", "expected one reward list per grid cell");
    if (s.kind == ModelKind::discounted && !(s.beta >= 0.0 && s.beta < 1.0)) {
      throw ValidationError("beta", "discount factor must satisfy 0 <= beta < 1");
    }
    available_.assign(M, 0);
    criteria_ = -1;
    for (std::size_t c = 0; c < M; ++c) {
      const std::string cp = "[" + std::to_string(c) + "]";
      if (s.available[c].empty()) throw ValidationError("available" + cp, "available action set is empty");
      for (int a : s.available[c]) {
        if (a < 0 || a >= s.actions) throw ValidationError("available" + cp, "action " + std::to_string(a) + " out of range");
        available_[c] |= single_action(a);
      }
      if (s.kernel[c].size() != static_cast<std::size_t>(s.actions)) {
        throw ValidationError("kernel" + cp, "expected one row per action");
      }
      if (s.rewards[c].size() != static_cast<std::size_t>(s.actions)) {
        throw ValidationError("rewards" + cp, "expected one reward vector per action");
      }
      for (int a = 0; a < s.actions; ++a) {
        const std::string ap = cp + "[" + std::to_string(a) + "]";
        const KernelRow& row = s.kernel[c][static_cast<std::size_t>(a)];
        auto& r = s.rewards[c][static_cast<std::size_t>(a)];
        if (!has_action(available_[c], a)) {
          // Unavailable actions are never used; normalize them so the tables stay rectangular.
          s.kernel[c][static_cast<std::size_t>(a)] = KernelRow{PieceMeasure::zero(StatePartition()), 1.0};
          if (criteria_ >= 0) r.assign(static_cast<std::size_t>(criteria_), 0.0);
          continue;
        }
        if (!(row.absorb >= 0.0) || !std::isfinite(row.absorb)) {
          throw ValidationError("kernel" + ap + ".absorb", "absorption mass must be finite and nonnegative");
        }
        const double sum = row.dest.total() + row.absorb;
        if (std::abs(sum - 1.0) > kMassTolerance) {
          throw ValidationError("kernel" + ap, "row sums to " + std::to_string(sum) + ", expected 1");
        }
        if (criteria_ < 0) criteria_ = static_cast<int>(r.size());
        if (r.empty() || static_cast<int>(r.size()) != criteria_) {
          throw ValidationError("rewards" + ap, "reward vectors must all have the same positive length");
        }
        for (double x : r)
          if (!std::isfinite(x)) throw ValidationError("rewards" + ap, "reward must be finite");
      }
    }
    // Unavailable rows seen before the first available one.
    for (std::size_t c = 0; c < M; ++c)
      for (int a = 0; a < s.actions; ++a)
        if (!has_action(available_[c], a)) s.rewards[c][static_cast<std::size_t>(a)].assign(static_cast<std::size_t>(criteria_), 0.0);
    if (std::abs(s.initial.total() - 1.0) > kMassTolerance) {
      throw ValidationError("initial", "initial distribution has mass " + std::to_string(s.initial.total()) + ", expected 1");
    }
  }

  void derive() {
    const std::size_t M = spec_.grid.size();
    const std::size_t A = static_cast<std::size_t>(spec_.actions);
    StatePartition fine = spec_.grid;
    fine = refine(fine, spec_.initial.partition());
    for (std::size_t c = 0; c < M; ++c)
      for (std::size_t a = 0; a < A; ++a)
        if (has_action(available_[c], static_cast<int>(a))) fine = refine(fine, spec_.kernel[c][a].dest.partition());
    measure_grid_ = fine;
    cell_of_fine_ = parent_intervals(measure_grid_, spec_.grid);
    initial_fine_ = spec_.initial.on(measure_grid_).masses();
    const double scale = spec_.kind == ModelKind::discounted ? spec_.beta : 1.0;
    fine_rows_.assign(M * A, FineRow{});
    reward_bound_ = 0.0;
    for (std::size_t c = 0; c < M; ++c) {
      for (std::size_t a = 0; a < A; ++a) {
        if (!has_action(available_[c], static_cast<int>(a))) continue;
        FineRow& row = fine_rows_[c * A + a];
        for_each_overlap(spec_.kernel[c][a].dest.partition(), measure_grid_,
                         [&](std::size_t i, std::size_t j, double lo, double hi) {
                           const auto& d = spec_.kernel[c][a].dest;
                           double m = d.mass(i) * ((hi - lo) / d.partition().length(i)) * scale;
                           if (m > 0.0) row.entries.emplace_back(static_cast<std::uint32_t>(j), m);
                         });
        for (auto& e : row.entries) row.alive += e.second;
        for (double x : spec_.rewards[c][a]) reward_bound_ = std::max(reward_bound_, std::abs(x));
      }
    }
  }

  Spec spec_;
  std::vector<ActionSet> available_;
  int criteria_ = 0;
  StatePartition measure_grid_;
  std::vector<std::size_t> cell_of_fine_;
  std::vector<double> initial_fine_;
  std::vector<FineRow> fine_rows_;
  double reward_bound_ = 0.0;
};

// ---------------------------------------------------------------------------------------------
// Policies

struct DeterministicPolicy {
  StatePartition partition;
  std::vector<int> actions;  // per interval

  int action_at(double x) const { return actions[partition.locate(x)]; }
  friend bool operator==(const DeterministicPolicy&, const DeterministicPolicy&) = default;
};

struct StationaryPolicy {
  StatePartition partition;
  std::vector<std::vector<double>> probs;  // per interval, one probability per action

  friend bool operator==(const StationaryPolicy&, const StationaryPolicy&) = default;
};

inline DeterministicPolicy constant_policy(const AtomlessMDP& m, int action) {
  DeterministicPolicy p{m.grid(), std::vector<int>(m.cells(), action)};
  for (std::size_t c = 0; c < m.cells(); ++c)
    if (!m.available(c, action)) p.actions[c] = lowest_action(m.available(c));
  return p;
}

inline StationaryPolicy to_stationary(const DeterministicPolicy& p, int actions) {
  StationaryPolicy s{p.partition, {}};
  s.probs.assign(p.actions.size(), std::vector<double>(static_cast<std::size_t>(actions), 0.0));
  for (std::size_t k = 0; k < p.actions.size(); ++k) {
    if (p.actions[k] < 0 || p.actions[k] >= actions) {
      throw ValidationError("policy[" + std::to_string(k) + "]", "action " + std::to_string(p.actions[k]) + " out of range");
    }
    s.probs[k][static_cast<std::size_t>(p.actions[k])] = 1.0;
  }
  return s;
}

// The same policy on the common refinement of its partition and `grid`.
inline DeterministicPolicy aligned(const DeterministicPolicy& p, const StatePartition& grid) {
  DeterministicPolicy out{refine(grid, p.partition), {}};
  for (std::size_t k : parent_intervals(out.partition, p.partition)) out.actions.push_back(p.actions[k]);
  return out;
}

inline StationaryPolicy aligned(const StationaryPolicy& p, const StatePartition& grid) {
  StationaryPolicy out{refine(grid, p.partition), {}};
  for (std::size_t k : parent_intervals(out.partition, p.partition)) out.probs.push_back(p.probs[k]);
  return out;
}

// Merge adjacent intervals with equal actions, keeping every breakpoint of `grid`.
inline DeterministicPolicy canonical(const DeterministicPolicy& p, const StatePartition& grid) {
  DeterministicPolicy a = aligned(p, grid);
  std::vector<double> t{0.0};
  std::vector<int> acts;
  for (std::size_t k = 0; k < a.actions.size(); ++k) {
    if (k > 0 && a.actions[k] == acts.back() && !grid.contains_breakpoint(a.partition.lo(k))) continue;
    if (k > 0) t.push_back(a.partition.lo(k));
    acts.push_back(a.actions[k]);
  }
  t.push_back(1.0);
  return DeterministicPolicy{StatePartition(std::move(t)), std::move(acts)};
}

inline void require_refines(const StatePartition& p, const AtomlessMDP& m) {
  if (!p.refines(m.grid())) throw PartitionMismatch("policy partition does not refine the base grid of the model");
}

inline void validate(const DeterministicPolicy& p, const AtomlessMDP& m) {
  if (p.actions.size() != p.partition.size()) throw ValidationError("policy", "one action per interval expected");
  require_refines(p.partition, m);
  auto cell = parent_intervals(p.partition, m.grid());
  for (std::size_t k = 0; k < p.actions.size(); ++k) {
    int a = p.actions[k];
    if (a < 0 || a >= m.actions() || !m.available(cell[k], a)) {
      throw ValidationError("policy[" + std::to_string(k) + "]", "action " + std::to_string(a) + " is not available");
    }
  }
}

inline void validate(const StationaryPolicy& p, const AtomlessMDP& m) {
  if (p.probs.size() != p.partition.size()) throw ValidationError("policy", "one distribution per interval expected");
  require_refines(p.partition, m);
  auto cell = parent_intervals(p.partition, m.grid());
  for (std::size_t k = 0; k < p.probs.size(); ++k) {
    const std::string path = "policy[" + std::to_string(k) + "]";
    if (p.probs[k].size() != static_cast<std::size_t>(m.actions())) throw ValidationError(path, "wrong number of probabilities");
    double sum = 0.0;
    for (int a = 0; a < m.actions(); ++a) {
      double pa = p.probs[k][static_cast<std::size_t>(a)];
      if (!(pa >= 0.0)) throw ValidationError(path, "negative probability");
      if (pa > 0.0 && !m.available(cell[k], a)) throw ValidationError(path, "mass on unavailable action " + std::to_string(a));
      sum += pa;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError(path, "probabilities sum to " + std::to_string(sum));
  }
}

// ---------------------------------------------------------------------------------------------
// Transforms

// Discounted model -> absorbing model: destination scaled by beta, the rest goes to the sink.
inline AtomlessMDP discounted_to_absorbing(const AtomlessMDP& m) {
  if (m.kind() != ModelKind::discounted) throw ValidationError("kind", "discounted_to_absorbing needs a discounted model");
  AtomlessMDP::Spec s = m.spec();
  const double beta = s.beta;
  for (auto& cell : s.kernel) {
    for (auto& row : cell) {
      row.absorb = (1.0 - beta) + beta * row.absorb;
      row.dest = row.dest.scaled(beta);
    }
  }
  s.kind = ModelKind::absorbing;
  s.beta = 0.0;
  return AtomlessMDP(std::move(s));
}

// Weighted-norm transform for a weight that is constant on each base cell.
// Discounted input is first put in absorbing form, so the check below is condition (d) with beta folded in.
inline AtomlessMDP weighted_transform(const AtomlessMDP& model, const std::vector<double>& w) {
  if (model.kind() == ModelKind::discounted) return weighted_transform(discounted_to_absorbing(model), w);
  const std::size_t M = model.cells();
  if (w.size() != M) throw ValidationError("weights", "expected one weight per base cell");
  for (std::size_t c = 0; c < M; ++c)
    if (!(w[c] > 0.0) || !std::isfinite(w[c])) throw ValidationError("weights[" + std::to_string(c) + "]", "weight must be positive");

  AtomlessMDP::Spec s = model.spec();
  auto weight_on = [&](const StatePartition& p) {
    std::vector<double> out(p.size());
    auto parent = parent_intervals(p, model.grid());
    for (std::size_t k = 0; k < p.size(); ++k) out[k] = w[parent[k]];
    return out;
  };
  for (std::size_t c = 0; c < M; ++c) {
    for (int a = 0; a < s.actions; ++a) {
      if (!model.available(c, a)) continue;
      auto& row = s.kernel[c][static_cast<std::size_t>(a)];
      // Split the destination on the grid so the weight is constant per interval.
      PieceMeasure d = row.dest.on(refine(model.grid(), row.dest.partition()));
      auto wd = weight_on(d.partition());
      std::vector<double> masses(d.masses());
      double alive = 0.0;
      for (std::size_t k = 0; k < masses.size(); ++k) {
        masses[k] *= wd[k] / w[c];
        alive += masses[k];
      }
      if (alive > 1.0 + kMassTolerance) {
        throw CertificateFailure("weight condition violated at cell " + std::to_string(c) + ", action " +
                                     std::to_string(a) + ": (1/w) * integral of w dp = " + std::to_string(alive),
                                 static_cast<int>(c), a);
      }
      row.dest = PieceMeasure(d.partition(), std::move(masses));
      row.absorb = std::max(0.0, 1.0 - alive);
      // Keep the row sum at exactly one after rounding.
      row.absorb = 1.0 - row.dest.total() < 0.0 ? 0.0 : 1.0 - row.dest.total();
    }
  }
  PieceMeasure mu = model.initial().on(refine(model.grid(), model.initial().partition()));
  auto wm = weight_on(mu.partition());
  double mass_w = 0.0;
  std::vector<double> mu_w(mu.masses());
  for (std::size_t k = 0; k < mu_w.size(); ++k) {
    mu_w[k] *= wm[k];
    mass_w += mu_w[k];
  }
  for (double& x : mu_w) x /= mass_w;
  s.initial = PieceMeasure(mu.partition(), std::move(mu_w));
  for (std::size_t c = 0; c < M; ++c)
    for (auto& r : s.rewards[c])
      for (double& x : r) x = x / w[c] * mass_w;
  return AtomlessMDP(std::move(s));
}

// ---------------------------------------------------------------------------------------------
// Uniform-absorption certificate

struct AbsorptionCertificate {
  double L = 0.0;                 // bound on sup over states and policies of the expected life time
  std::vector<double> survival;   // s_n = sup over policies of P(alive at time n), s_0 = 1
  int iterations = 0;

  // Certified bound on sup over policies of E sum_{t >= n} I{t < T}.
  double tail(std::size_t n) const {
    double s = survival.empty() ? 1.0 : survival[std::min(n, survival.size() - 1)];
    return std::min({L, L * L / static_cast<double>(n + 1), s * L});
  }
};

struct CertificateOptions {
  double tol = 1e-13;
  int max_iterations = 200000;
  int max_survival_steps = 100000;
};

inline AbsorptionCertificate absorption_certificate(const AtomlessMDP& m, CertificateOptions opt = {}) {
  const std::size_t M = m.cells();
  const int A = m.actions();
  // Alive mass from (cell, action) into each base cell.
  std::vector<std::vector<std::pair<std::size_t, double>>> to_cell(M * static_cast<std::size_t>(A));
  for (std::size_t c = 0; c < M; ++c) {
    for (int a = 0; a < A; ++a) {
      if (!m.available(c, a)) continue;
      auto& out = to_cell[c * static_cast<std::size_t>(A) + static_cast<std::size_t>(a)];
      for (auto [f, mass] : m.fine_row(c, a).entries) {
        std::size_t cc = m.cell_of_fine(f);
        if (!out.empty() && out.back().first == cc)
          out.back().second += mass;
        else
          out.emplace_back(cc, mass);
      }
    }
  }
  auto bellman = [&](const std::vector<double>& u, double constant) {
    std::vector<double> next(M);
    for (std::size_t c = 0; c < M; ++c) {
      double best = 0.0;
      for (int a = 0; a < A; ++a) {
        if (!m.available(c, a)) continue;
        double s = 0.0;
        for (auto [cc, mass] : to_cell[c * static_cast<std::size_t>(A) + static_cast<std::size_t>(a)]) s += mass * u[cc];
        best = std::max(best, s);
      }
      next[c] = constant + best;
    }
    return next;
  };

  AbsorptionCertificate cert;
  std::vector<double> U(M, 0.0);
  double prev_delta = std::numeric_limits<double>::infinity();
  bool converged = false;
  for (int k = 0; k < opt.max_iterations; ++k) {
    std::vector<double> next = bellman(U, 1.0);
    double delta = 0.0, top = 0.0;
    for (std::size_t c = 0; c < M; ++c) {
      delta = std::max(delta, next[c] - U[c]);
      top = std::max(top, next[c]);
    }
    U = std::move(next);
    cert.iterations = k + 1;
    if (!std::isfinite(top) || top > 1e15) break;
    if (delta <= opt.tol * std::max(1.0, top)) {
      double ratio = prev_delta > 0.0 ? delta / prev_delta : 0.0;
      double extra = (ratio > 0.0 && ratio < 1.0) ? delta * ratio / (1.0 - ratio) : 0.0;
      cert.L = top + extra;
      converged = true;
      break;
    }
    prev_delta = delta;
  }
  if (!converged) {
    throw NotCertifiedError("expected absorption time did not converge within " + std::to_string(opt.max_iterations) +
                            " iterations; the model may be absorbing but not uniformly absorbing");
  }

  // n-step survival: u_n(c) = max_a P(alive at n | start in c).
  std::vector<double> mu_cell(M, 0.0);
  for (std::size_t f = 0; f < m.initial_fine().size(); ++f) mu_cell[m.cell_of_fine(f)] += m.initial_fine()[f];
  std::vector<double> u(M, 1.0);
  cert.survival.push_back(1.0);
  for (int n = 1; n <= opt.max_survival_steps; ++n) {
    u = bellman(u, 0.0);
    double s = 0.0;
    for (std::size_t c = 0; c < M; ++c) s += mu_cell[c] * u[c];
    s = std::min(s, cert.survival.back());
    cert.survival.push_back(s);
    if (s * cert.L < 1e-17) break;
  }
  return cert;
}

}  // namespace detpol
