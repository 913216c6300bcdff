#pragma once

// State marginals q_n, occupancy measures Q^π and performance vectors v^π.
//
// Every marginal has constant density on each interval of the model's measure grid, so a
// policy acts on the chain only through θ(f, a): the fraction of measure-grid interval f on
// which action a is used. Two evaluators are provided: the certified series (occupancy,
// performance) and a direct sparse solve over (cell, action) pairs (exact_performance).

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "detpol/error.hpp"
#include "detpol/measure.hpp"
#include "detpol/model.hpp"

namespace detpol {

using PerformanceVector = Eigen::VectorXd;

struct OccupancyMeasure {
  StatePartition partition;
  int actions = 1;
  std::vector<double> masses;     // [interval * actions + action], expected visits
  double truncation_error = 0.0;  // certified bound on the occupancy mass left out
  std::size_t steps = 0;

  double mass(std::size_t k, int a) const { return masses[k * static_cast<std::size_t>(actions) + static_cast<std::size_t>(a)]; }

  PieceMeasure state_marginal() const {
    std::vector<double> q(partition.size(), 0.0);
    for (std::size_t k = 0; k < q.size(); ++k)
      for (int a = 0; a < actions; ++a) q[k] += mass(k, a);
    return PieceMeasure(partition, std::move(q));
  }

  // q(X) = E T.
  double total() const {
    double s = 0.0;
    for (double x : masses) s += x;
    return s;
  }
};

// |Q1 - Q2|(X x A) on the common refinement of the two partitions.
inline double total_variation(const OccupancyMeasure& q1, const OccupancyMeasure& q2) {
  if (q1.actions != q2.actions) throw DomainError("total_variation: occupancy measures over different action sets");
  double tv = 0.0;
  for_each_overlap(q1.partition, q2.partition, [&](std::size_t i, std::size_t j, double lo, double hi) {
    const double f1 = (hi - lo) / q1.partition.length(i);
    const double f2 = (hi - lo) / q2.partition.length(j);
    for (int a = 0; a < q1.actions; ++a) tv += std::abs(q1.mass(i, a) * f1 - q2.mass(j, a) * f2);
  });
  return tv;
}

namespace detail {

// The chain on refine(measure grid, P): interval j sits in measure-grid interval fine(j) and
// base cell cell(j), and holds the share omega(j) of that interval's length.
class Lifted {
 public:
  Lifted(const AtomlessMDP& m, const StatePartition& policy_partition) : m_(&m) {
    states_ = refine(m.measure_grid(), policy_partition);
    fine_ = parent_intervals(states_, m.measure_grid());
    source_ = parent_intervals(states_, policy_partition);
    const std::size_t S = states_.size();
    cell_.resize(S);
    omega_.resize(S);
    first_.assign(m.measure_grid().size() + 1, 0);
    for (std::size_t j = 0; j < S; ++j) {
      cell_[j] = m.cell_of_fine(fine_[j]);
      omega_[j] = states_.length(j) / m.measure_grid().length(fine_[j]);
      ++first_[fine_[j] + 1];
    }
    for (std::size_t f = 0; f + 1 < first_.size(); ++f) first_[f + 1] += first_[f];
  }

  const AtomlessMDP& model() const { return *m_; }
  const StatePartition& states() const { return states_; }
  std::size_t size() const { return states_.size(); }
  std::size_t fine(std::size_t j) const { return fine_[j]; }
  std::size_t cell(std::size_t j) const { return cell_[j]; }
  // Interval of the partition the chain was built from.
  std::size_t source(std::size_t j) const { return source_[j]; }
  double omega(std::size_t j) const { return omega_[j]; }
  // States inside measure-grid interval f are [begin(f), end(f)).
  std::size_t begin(std::size_t f) const { return first_[f]; }
  std::size_t end(std::size_t f) const { return first_[f + 1]; }

  std::vector<double> initial() const {
    std::vector<double> q(size());
    for (std::size_t j = 0; j < q.size(); ++j) q[j] = m_->initial_fine()[fine_[j]] * omega_[j];
    return q;
  }

  // One step of the chain. probs(j) returns the action distribution used on state j.
  template <class Probs>
  std::vector<double> step(const std::vector<double>& q, Probs&& probs) const {
    const AtomlessMDP& m = *m_;
    const std::size_t A = static_cast<std::size_t>(m.actions());
    std::vector<double> w(m.cells() * A, 0.0);
    for (std::size_t j = 0; j < q.size(); ++j) {
      if (q[j] == 0.0) continue;
      const std::vector<double>& p = probs(j);
      for (std::size_t a = 0; a < A; ++a)
        if (p[a] > 0.0) w[cell_[j] * A + a] += q[j] * p[a];
    }
    std::vector<double> g(m.measure_grid().size(), 0.0);
    for (std::size_t c = 0; c < m.cells(); ++c)
      for (std::size_t a = 0; a < A; ++a) {
        const double wa = w[c * A + a];
        if (wa == 0.0) continue;
        for (auto [f, mass] : m.fine_row(c, static_cast<int>(a)).entries) g[f] += wa * mass;
      }
    std::vector<double> next(q.size());
    for (std::size_t j = 0; j < next.size(); ++j) next[j] = g[fine_[j]] * omega_[j];
    return next;
  }

 private:
  const AtomlessMDP* m_;
  StatePartition states_;
  std::vector<std::size_t> fine_, source_, cell_, first_;
  std::vector<double> omega_;
};

// θ(f, a) for a policy whose partition refines the base grid.
inline std::vector<double> fractions(const AtomlessMDP& m, const StationaryPolicy& pi) {
  const std::size_t A = static_cast<std::size_t>(m.actions());
  std::vector<double> theta(m.measure_grid().size() * A, 0.0);
  for_each_overlap(m.measure_grid(), pi.partition, [&](std::size_t f, std::size_t k, double lo, double hi) {
    const double share = (hi - lo) / m.measure_grid().length(f);
    for (std::size_t a = 0; a < A; ++a) theta[f * A + a] += share * pi.probs[k][a];
  });
  return theta;
}

inline std::vector<double> fractions(const AtomlessMDP& m, const DeterministicPolicy& phi) {
  const std::size_t A = static_cast<std::size_t>(m.actions());
  std::vector<double> theta(m.measure_grid().size() * A, 0.0);
  for_each_overlap(m.measure_grid(), phi.partition, [&](std::size_t f, std::size_t k, double lo, double hi) {
    theta[f * A + static_cast<std::size_t>(phi.actions[k])] += (hi - lo) / m.measure_grid().length(f);
  });
  return theta;
}

// Reward table as an (M*A) x N matrix, row c*A + a.
inline Eigen::MatrixXd reward_matrix(const AtomlessMDP& m) {
  const std::size_t A = static_cast<std::size_t>(m.actions());
  Eigen::MatrixXd R = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m.cells() * A), m.criteria());
  for (std::size_t c = 0; c < m.cells(); ++c)
    for (std::size_t a = 0; a < A; ++a)
      if (m.available(c, static_cast<int>(a)))
        for (int n = 0; n < m.criteria(); ++n) R(static_cast<Eigen::Index>(c * A + a), n) = m.reward(c, static_cast<int>(a))[static_cast<std::size_t>(n)];
  return R;
}

// Expected reward collected after the first transition, per (cell, action) row:
// Y = K (R + Y) restricted to the actions θ uses. Rows for pure-absorption pairs are zero.
inline Eigen::MatrixXd continuation(const AtomlessMDP& m, const std::vector<double>& theta, const Eigen::MatrixXd& R) {
  const std::size_t A = static_cast<std::size_t>(m.actions());
  const std::size_t MA = m.cells() * A;
  std::vector<Eigen::Index> index(MA, -1);
  Eigen::Index P = 0;
  for (std::size_t c = 0; c < m.cells(); ++c)
    for (std::size_t a = 0; a < A; ++a)
      if (m.available(c, static_cast<int>(a)) && !m.fine_row(c, static_cast<int>(a)).entries.empty()) index[c * A + a] = P++;
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(MA), R.cols());
  if (P == 0) return Y;

  std::vector<Eigen::Triplet<double>> trip;
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(P, R.cols());
  for (std::size_t c = 0; c < m.cells(); ++c) {
    for (std::size_t a = 0; a < A; ++a) {
      const Eigen::Index p = index[c * A + a];
      if (p < 0) continue;
      trip.emplace_back(p, p, 1.0);
      for (auto [f, mass] : m.fine_row(c, static_cast<int>(a)).entries) {
        const std::size_t cf = m.cell_of_fine(f);
        for (std::size_t b = 0; b < A; ++b) {
          const double t = theta[f * A + b];
          if (t == 0.0) continue;
          rhs.row(p) += (mass * t) * R.row(static_cast<Eigen::Index>(cf * A + b));
          const Eigen::Index q = index[cf * A + b];
          if (q >= 0) trip.emplace_back(p, q, -mass * t);
        }
      }
    }
  }
  Eigen::SparseMatrix<double> K(P, P);
  K.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(K);
  if (lu.info() != Eigen::Success) throw NotCertifiedError("pair system is singular; the policy does not reach the sink");
  Eigen::MatrixXd sol = lu.solve(rhs);
  for (std::size_t k = 0; k < MA; ++k)
    if (index[k] >= 0) Y.row(static_cast<Eigen::Index>(k)) = sol.row(index[k]);
  return Y;
}

// ∫ Σ_a θ(f,a) (R + Y)(cell(f), a) dμ.
inline Eigen::VectorXd initial_value(const AtomlessMDP& m, const std::vector<double>& theta, const Eigen::MatrixXd& RY) {
  const std::size_t A = static_cast<std::size_t>(m.actions());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(RY.cols());
  for (std::size_t f = 0; f < m.measure_grid().size(); ++f) {
    const double mu = m.initial_fine()[f];
    if (mu == 0.0) continue;
    const std::size_t c = m.cell_of_fine(f);
    for (std::size_t a = 0; a < A; ++a)
      if (theta[f * A + a] > 0.0) v += (mu * theta[f * A + a]) * RY.row(static_cast<Eigen::Index>(c * A + a)).transpose();
  }
  return v;
}

// Expected visits to each measure-grid interval: g = μ + P^T g with P the fine-cell transition matrix.
inline std::vector<double> state_occupancy(const AtomlessMDP& m, const std::vector<double>& theta) {
  const std::size_t F = m.measure_grid().size();
  const std::size_t A = static_cast<std::size_t>(m.actions());
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t f = 0; f < F; ++f) {
    trip.emplace_back(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(f), 1.0);
    const std::size_t c = m.cell_of_fine(f);
    for (std::size_t a = 0; a < A; ++a) {
      const double t = theta[f * A + a];
      if (t == 0.0) continue;
      for (auto [g, mass] : m.fine_row(c, static_cast<int>(a)).entries)
        trip.emplace_back(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(f), -t * mass);
    }
  }
  Eigen::SparseMatrix<double> K(static_cast<Eigen::Index>(F), static_cast<Eigen::Index>(F));
  K.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(K);
  if (lu.info() != Eigen::Success) throw NotCertifiedError("occupancy system is singular; the policy does not reach the sink");
  Eigen::VectorXd mu = Eigen::Map<const Eigen::VectorXd>(m.initial_fine().data(), static_cast<Eigen::Index>(F));
  Eigen::VectorXd g = lu.solve(mu);
  std::vector<double> out(F);
  for (std::size_t f = 0; f < F; ++f) out[f] = std::max(0.0, g[static_cast<Eigen::Index>(f)]);
  return out;
}

}  // namespace detail

// q_{n+1}(Y) = ∫∫ p(Y|x,a) π(da|x) q_n(dx), returned on the measure grid.
inline PieceMeasure marginal_step(const AtomlessMDP& m, const StationaryPolicy& pi, const PieceMeasure& q) {
  validate(pi, m);
  const StatePartition common = refine(refine(m.grid(), pi.partition), q.partition());
  const PieceMeasure qc = q.on(common);
  auto pol = parent_intervals(common, pi.partition);
  auto cell = parent_intervals(common, m.grid());
  const std::size_t A = static_cast<std::size_t>(m.actions());
  std::vector<double> w(m.cells() * A, 0.0);
  for (std::size_t j = 0; j < common.size(); ++j)
    for (std::size_t a = 0; a < A; ++a) w[cell[j] * A + a] += qc.mass(j) * pi.probs[pol[j]][a];
  std::vector<double> g(m.measure_grid().size(), 0.0);
  for (std::size_t c = 0; c < m.cells(); ++c)
    for (std::size_t a = 0; a < A; ++a)
      if (w[c * A + a] > 0.0)
        for (auto [f, mass] : m.fine_row(c, static_cast<int>(a)).entries) g[f] += w[c * A + a] * mass;
  return PieceMeasure(m.measure_grid(), std::move(g));
}

inline PieceMeasure marginal_step(const AtomlessMDP& m, const DeterministicPolicy& phi, const PieceMeasure& q) {
  validate(phi, m);
  return marginal_step(m, to_stationary(phi, m.actions()), q);
}

struct OccupancyOptions {
  double tol = 1e-12;
  std::size_t max_steps = 50'000'000;
};

// Q^π = Σ_n q_n ⊗ π, truncated once the certified remaining mass is below tol.
inline OccupancyMeasure occupancy(const AtomlessMDP& m, const AbsorptionCertificate& cert, const StationaryPolicy& pi,
                                  OccupancyOptions opt = {}) {
  validate(pi, m);
  if (!(opt.tol > 0.0)) throw DomainError("occupancy: tol must be positive");
  detail::Lifted chain(m, pi.partition);
  const std::size_t A = static_cast<std::size_t>(m.actions());
  auto probs = [&](std::size_t j) -> const std::vector<double>& { return pi.probs[chain.source(j)]; };

  OccupancyMeasure Q;
  Q.partition = chain.states();
  Q.actions = m.actions();
  Q.masses.assign(chain.size() * A, 0.0);
  std::vector<double> q = chain.initial();
  for (std::size_t n = 0;; ++n) {
    double alive = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
      alive += q[j];
      if (q[j] == 0.0) continue;
      const auto& p = probs(j);
      for (std::size_t a = 0; a < A; ++a) Q.masses[j * A + a] += q[j] * p[a];
    }
    q = chain.step(q, probs);
    double rest = 0.0;
    for (double x : q) rest += x;
    // Everything from step n+1 on is at most (mass alive at n+1) * L.
    const double bound = std::min(rest * cert.L, cert.tail(n + 1));
    Q.steps = n + 1;
    if (bound <= opt.tol || rest == 0.0) {
      Q.truncation_error = rest == 0.0 ? 0.0 : bound;
      break;
    }
    if (n + 1 >= opt.max_steps) throw CertifiedFailure("occupancy series did not reach tolerance", bound);
  }
  return Q;
}

inline OccupancyMeasure occupancy(const AtomlessMDP& m, const StationaryPolicy& pi, OccupancyOptions opt = {}) {
  return occupancy(m, absorption_certificate(m), pi, opt);
}

inline OccupancyMeasure occupancy(const AtomlessMDP& m, const DeterministicPolicy& phi, OccupancyOptions opt = {}) {
  validate(phi, m);
  return occupancy(m, to_stationary(phi, m.actions()), opt);
}

// v = ∫ r dQ. The error against the exact value is at most Q.truncation_error * max|r| per coordinate.
inline PerformanceVector performance(const AtomlessMDP& m, const OccupancyMeasure& Q) {
  PerformanceVector v = PerformanceVector::Zero(m.criteria());
  auto cell = parent_intervals(Q.partition, m.grid());
  for (std::size_t k = 0; k < Q.partition.size(); ++k)
    for (int a = 0; a < Q.actions; ++a) {
      const double q = Q.mass(k, a);
      if (q == 0.0) continue;
      const auto& r = m.reward(cell[k], a);
      for (int n = 0; n < m.criteria(); ++n) v[n] += q * r[static_cast<std::size_t>(n)];
    }
  return v;
}

inline PerformanceVector performance(const AtomlessMDP& m, const StationaryPolicy& pi, OccupancyOptions opt = {}) {
  return performance(m, occupancy(m, pi, opt));
}

inline PerformanceVector performance(const AtomlessMDP& m, const DeterministicPolicy& phi, OccupancyOptions opt = {}) {
  return performance(m, occupancy(m, phi, opt));
}

// v^π by a direct sparse solve over (cell, action) pairs; no truncation.
inline PerformanceVector exact_performance(const AtomlessMDP& m, const StationaryPolicy& pi) {
  validate(pi, m);
  auto theta = detail::fractions(m, pi);
  Eigen::MatrixXd R = detail::reward_matrix(m);
  return detail::initial_value(m, theta, R + detail::continuation(m, theta, R));
}

inline PerformanceVector exact_performance(const AtomlessMDP& m, const DeterministicPolicy& phi) {
  validate(phi, m);
  auto theta = detail::fractions(m, phi);
  Eigen::MatrixXd R = detail::reward_matrix(m);
  return detail::initial_value(m, theta, R + detail::continuation(m, theta, R));
}

// E^π T: the performance of the unit reward.
inline double expected_lifetime(const AtomlessMDP& m, const StationaryPolicy& pi) {
  validate(pi, m);
  auto theta = detail::fractions(m, pi);
  Eigen::MatrixXd R = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(m.cells()) * m.actions(), 1);
  return detail::initial_value(m, theta, R + detail::continuation(m, theta, R))[0];
}

// |q - μ - step(q)|(X) for the state marginal q of Q.
inline double fixed_point_residual(const AtomlessMDP& m, const StationaryPolicy& pi, const OccupancyMeasure& Q) {
  const PieceMeasure q = Q.state_marginal();
  const PieceMeasure next = marginal_step(m, pi, q);
  const StatePartition common = refine(refine(q.partition(), next.partition()), m.initial().partition());
  const PieceMeasure a = q.on(common), b = next.on(common), mu = m.initial().on(common);
  double r = 0.0;
  for (std::size_t k = 0; k < common.size(); ++k) r += std::abs(a.mass(k) - mu.mass(k) - b.mass(k));
  return r;
}

// σ(a|x) = Q(dx, a) / Q(dx, A). Intervals without occupancy mass get the lowest available action.
inline StationaryPolicy policy_from_occupancy(const AtomlessMDP& m, const OccupancyMeasure& Q) {
  StationaryPolicy s{Q.partition, {}};
  auto cell = parent_intervals(Q.partition, m.grid());
  for (std::size_t k = 0; k < Q.partition.size(); ++k) {
    std::vector<double> p(static_cast<std::size_t>(Q.actions), 0.0);
    double total = 0.0;
    for (int a = 0; a < Q.actions; ++a) total += Q.mass(k, a);
    if (total > 0.0) {
      for (int a = 0; a < Q.actions; ++a) p[static_cast<std::size_t>(a)] = Q.mass(k, a) / total;
    } else {
      p[static_cast<std::size_t>(lowest_action(m.available(cell[k])))] = 1.0;
    }
    s.probs.push_back(std::move(p));
  }
  return s;
}

}  // namespace detpol
