#pragma once

// Scalarized total-reward dynamic programming on submodels: optimal deterministic policies for
// the reward <b, r>, the support function h(b) of the performance set, and conserving-action
// submodels.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "detpol/error.hpp"
#include "detpol/measure.hpp"
#include "detpol/model.hpp"
#include "detpol/occupancy.hpp"

namespace detpol {

// Action restriction of a model: allowed[k] ⊆ A(x) on interval k of `partition`.
struct SubmodelSpec {
  StatePartition partition;
  std::vector<ActionSet> allowed;

  friend bool operator==(const SubmodelSpec&, const SubmodelSpec&) = default;
};

inline SubmodelSpec full_submodel(const AtomlessMDP& m) {
  SubmodelSpec s{m.grid(), {}};
  for (std::size_t c = 0; c < m.cells(); ++c) s.allowed.push_back(m.available(c));
  return s;
}

inline void validate(const SubmodelSpec& sub, const AtomlessMDP& m) {
  if (sub.allowed.size() != sub.partition.size()) throw ValidationError("submodel", "one action set per interval expected");
  require_refines(sub.partition, m);
  auto cell = parent_intervals(sub.partition, m.grid());
  for (std::size_t k = 0; k < sub.allowed.size(); ++k) {
    if (sub.allowed[k] == 0) throw ValidationError("submodel[" + std::to_string(k) + "]", "empty action set");
    if ((sub.allowed[k] & ~m.available(cell[k])) != 0) {
      throw ValidationError("submodel[" + std::to_string(k) + "]", "action set is not a subset of the available actions");
    }
  }
}

inline bool contains(const SubmodelSpec& sub, const DeterministicPolicy& phi) {
  bool ok = true;
  for_each_overlap(sub.partition, phi.partition, [&](std::size_t i, std::size_t j, double lo, double hi) {
    if (hi - lo > StatePartition::kMergeTolerance && !has_action(sub.allowed[i], phi.actions[j])) ok = false;
  });
  return ok;
}

// Merge adjacent intervals with equal action sets, keeping every breakpoint of `grid`.
inline SubmodelSpec canonical(const SubmodelSpec& sub, const StatePartition& grid) {
  std::vector<double> t{0.0};
  std::vector<ActionSet> allowed;
  for (std::size_t k = 0; k < sub.allowed.size(); ++k) {
    if (k > 0 && sub.allowed[k] == allowed.back() && !grid.contains_breakpoint(sub.partition.lo(k))) continue;
    if (k > 0) t.push_back(sub.partition.lo(k));
    allowed.push_back(sub.allowed[k]);
  }
  t.push_back(1.0);
  return SubmodelSpec{StatePartition(std::move(t)), std::move(allowed)};
}

struct ValueFunction {
  StatePartition partition;
  std::vector<double> values;

  double at(double x) const { return values[partition.locate(x)]; }
};

struct ScalarSolution {
  ValueFunction value;
  DeterministicPolicy policy;
  double h = 0.0;                     // ∫ v dμ
  std::vector<double> action_values;  // ⟨b, r(c,a)⟩ + ∫ v dp(·|c,a), row c*A + a
  int sweeps = 0;
  int improvements = 0;
};

struct ScalarOptions {
  double tol = 1e-12;     // relative; ties and improvements are judged at this scale
  int warm_sweeps = 30;   // value-iteration sweeps before the exact polish
  int max_improvements = 500;
};

namespace detail {

inline std::vector<double> scalar_rewards(const AtomlessMDP& m, const Eigen::VectorXd& b) {
  if (b.size() != m.criteria()) throw DomainError("direction has " + std::to_string(b.size()) + " coordinates, model has " + std::to_string(m.criteria()));
  const std::size_t A = static_cast<std::size_t>(m.actions());
  std::vector<double> rho(m.cells() * A, 0.0);
  for (std::size_t c = 0; c < m.cells(); ++c)
    for (std::size_t a = 0; a < A; ++a)
      if (m.available(c, static_cast<int>(a))) {
        const auto& r = m.reward(c, static_cast<int>(a));
        double s = 0.0;
        for (int n = 0; n < m.criteria(); ++n) s += b[n] * r[static_cast<std::size_t>(n)];
        rho[c * A + a] = s;
      }
  return rho;
}

// y(c,a) = ∫ v dp(·|c,a) for v given on the lifted chain.
inline std::vector<double> backup(const Lifted& chain, const std::vector<double>& v) {
  const AtomlessMDP& m = chain.model();
  const std::size_t A = static_cast<std::size_t>(m.actions());
  std::vector<double> vbar(m.measure_grid().size(), 0.0);
  for (std::size_t j = 0; j < chain.size(); ++j) vbar[chain.fine(j)] += chain.omega(j) * v[j];
  std::vector<double> y(m.cells() * A, 0.0);
  for (std::size_t c = 0; c < m.cells(); ++c)
    for (std::size_t a = 0; a < A; ++a) {
      if (!m.available(c, static_cast<int>(a))) continue;
      double s = 0.0;
      for (auto [f, mass] : m.fine_row(c, static_cast<int>(a)).entries) s += mass * vbar[f];
      y[c * A + a] = s;
    }
  return y;
}

}  // namespace detail

// Optimal deterministic policy of `sub` for the scalar reward <b, r>.
// A few value-iteration sweeps warm-start policy iteration, whose evaluation step is an exact
// sparse solve; the returned values are those of the returned policy.
inline ScalarSolution value_iteration(const AtomlessMDP& m, const SubmodelSpec& sub, const Eigen::VectorXd& b,
                                      ScalarOptions opt = {}) {
  validate(sub, m);
  const std::size_t A = static_cast<std::size_t>(m.actions());
  const std::vector<double> rho = detail::scalar_rewards(m, b);
  detail::Lifted chain(m, sub.partition);
  const std::size_t S = chain.size();
  auto allowed = [&](std::size_t j) { return sub.allowed[chain.source(j)]; };
  double rho_max = 0.0;
  for (double x : rho) rho_max = std::max(rho_max, std::abs(x));

  ScalarSolution sol;
  // Greedy choice with ties broken toward the lowest action index.
  std::vector<int> act(S, 0);
  std::vector<double> q(m.cells() * A, 0.0);
  auto greedy = [&](std::size_t j, double tie) {
    const std::size_t c = chain.cell(j);
    double best = -std::numeric_limits<double>::infinity();
    for (int a : actions_of(allowed(j))) best = std::max(best, q[c * A + static_cast<std::size_t>(a)]);
    for (int a : actions_of(allowed(j)))
      if (q[c * A + static_cast<std::size_t>(a)] >= best - tie) return a;
    return lowest_action(allowed(j));
  };

  std::vector<double> v(S, 0.0);
  for (int sweep = 0; sweep < opt.warm_sweeps; ++sweep) {
    std::vector<double> y = detail::backup(chain, v);
    for (std::size_t k = 0; k < q.size(); ++k) q[k] = rho[k] + y[k];
    double change = 0.0;
    for (std::size_t j = 0; j < S; ++j) {
      const int a = greedy(j, 0.0);
      const double nv = q[chain.cell(j) * A + static_cast<std::size_t>(a)];
      change = std::max(change, std::abs(nv - v[j]));
      v[j] = nv;
      act[j] = a;
    }
    sol.sweeps = sweep + 1;
    if (change <= opt.tol * (1.0 + rho_max)) break;
  }
  if (sol.sweeps == 0)
    for (std::size_t j = 0; j < S; ++j) act[j] = lowest_action(allowed(j));

  Eigen::MatrixXd R(static_cast<Eigen::Index>(rho.size()), 1);
  for (std::size_t k = 0; k < rho.size(); ++k) R(static_cast<Eigen::Index>(k), 0) = rho[k];
  DeterministicPolicy pol{chain.states(), {}};
  for (int it = 0;; ++it) {
    pol.actions = act;
    Eigen::MatrixXd Y = detail::continuation(m, detail::fractions(m, pol), R);
    double vmax = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
      q[k] = rho[k] + Y(static_cast<Eigen::Index>(k), 0);
      vmax = std::max(vmax, std::abs(q[k]));
    }
    const double tie = opt.tol * (1.0 + vmax);
    bool changed = false;
    for (std::size_t j = 0; j < S; ++j) {
      const std::size_t c = chain.cell(j);
      double best = -std::numeric_limits<double>::infinity();
      for (int a : actions_of(allowed(j))) best = std::max(best, q[c * A + static_cast<std::size_t>(a)]);
      if (q[c * A + static_cast<std::size_t>(act[j])] < best - tie) {
        act[j] = greedy(j, tie);
        changed = true;
      }
    }
    sol.improvements = it;
    if (!changed) break;
    if (it >= opt.max_improvements) throw CertifiedFailure("policy iteration did not stabilize", tie);
  }

  sol.action_values = q;
  sol.value.partition = chain.states();
  sol.value.values.resize(S);
  const std::vector<double> mu = chain.initial();
  sol.h = 0.0;
  for (std::size_t j = 0; j < S; ++j) {
    sol.value.values[j] = q[chain.cell(j) * A + static_cast<std::size_t>(act[j])];
    sol.h += mu[j] * sol.value.values[j];
  }
  sol.policy = canonical(DeterministicPolicy{chain.states(), act}, m.grid());
  return sol;
}

inline ScalarSolution value_iteration(const AtomlessMDP& m, const Eigen::VectorXd& b, ScalarOptions opt = {}) {
  return value_iteration(m, full_submodel(m), b, opt);
}

struct Support {
  double h;
  DeterministicPolicy policy;
};

// h(b) = sup over the submodel's policies of <b, v>, with a deterministic maximizer.
inline Support support(const AtomlessMDP& m, const SubmodelSpec& sub, const Eigen::VectorXd& b) {
  ScalarSolution s = value_iteration(m, sub, b);
  return Support{s.h, std::move(s.policy)};
}

inline Support support(const AtomlessMDP& m, const Eigen::VectorXd& b) { return support(m, full_submodel(m), b); }

inline double default_conserving_tolerance(const AtomlessMDP& m, const Eigen::VectorXd& b) {
  double top = 0.0;
  for (double x : detail::scalar_rewards(m, b)) top = std::max(top, std::abs(x));
  return 1e-8 * (1.0 + top);
}

// Actions a with |<b, r(x,a)> + ∫ v* dp(·|x,a) - v*(x)| <= eta, for v* from value_iteration(m, sub, b).
inline SubmodelSpec conserving_submodel(const AtomlessMDP& m, const SubmodelSpec& sub, const ScalarSolution& opt_sol,
                                        double eta) {
  validate(sub, m);
  const std::size_t A = static_cast<std::size_t>(m.actions());
  const StatePartition& P = opt_sol.value.partition;
  if (!P.refines(sub.partition)) throw PartitionMismatch("value function is not defined on a refinement of the submodel");
  auto src = parent_intervals(P, sub.partition);
  auto cell = parent_intervals(P, m.grid());
  SubmodelSpec out{P, {}};
  for (std::size_t k = 0; k < P.size(); ++k) {
    ActionSet keep = 0;
    const double vk = opt_sol.value.values[k];
    for (int a : actions_of(sub.allowed[src[k]]))
      if (std::abs(opt_sol.action_values[cell[k] * A + static_cast<std::size_t>(a)] - vk) <= eta) keep |= single_action(a);
    if (keep == 0) {
      throw ToleranceError("conserving action set is empty on [" + std::to_string(P.lo(k)) + ", " +
                           std::to_string(P.hi(k)) + "]; eta is below the numerical resolution");
    }
    out.allowed.push_back(keep);
  }
  return canonical(out, m.grid());
}

inline SubmodelSpec conserving_submodel(const AtomlessMDP& m, const SubmodelSpec& sub, const Eigen::VectorXd& b) {
  return conserving_submodel(m, sub, value_iteration(m, sub, b), default_conserving_tolerance(m, b));
}

}  // namespace detpol
