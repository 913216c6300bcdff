#pragma once

// Minimum-norm point of the convex hull of a set known only through a linear minimization
// oracle (Wolfe's algorithm), and Carathéodory pruning of convex combinations.

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace detpol {

template <class Payload>
struct HullAtom {
  Eigen::VectorXd point;
  Payload payload;
  double weight = 0.0;
};

enum class HullStatus { inside, outside, converged, stalled, iteration_cap };

template <class Payload>
struct MinNormResult {
  Eigen::VectorXd x;                     // Σ weight * point, a point of the hull
  std::vector<HullAtom<Payload>> atoms;  // the final corral
  double upper = 0.0;                    // ‖x‖ >= distance from 0 to the set
  double lower = 0.0;                    // certified lower bound on that distance
  HullStatus status = HullStatus::iteration_cap;
  int iterations = 0;
};

struct MinNormOptions {
  double inside_tol = 0.0;                                        // stop once ‖x‖ <= inside_tol
  double outside_tol = std::numeric_limits<double>::infinity();  // stop once the lower bound exceeds this
  double gap_tol = 1e-14;                                         // stop once upper - lower <= gap_tol
  int max_iterations = 500;
};

// Reduces a convex combination to affinely independent support (at most dim + 1 points) without
// changing Σ weight * point.
template <class Payload>
void caratheodory_prune(std::vector<HullAtom<Payload>>& atoms, double drop = 1e-15) {
  for (;;) {
    atoms.erase(std::remove_if(atoms.begin(), atoms.end(), [&](const HullAtom<Payload>& a) { return a.weight <= drop; }),
                atoms.end());
    const Eigen::Index n = static_cast<Eigen::Index>(atoms.size());
    if (n <= 1) break;
    const Eigen::Index d = atoms.front().point.size();
    Eigen::MatrixXd M(d + 1, n);
    for (Eigen::Index k = 0; k < n; ++k) {
      M.block(0, k, d, 1) = atoms[static_cast<std::size_t>(k)].point;
      M(d, k) = 1.0;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    lu.setThreshold(1e-11);
    if (lu.rank() == n) break;
    Eigen::VectorXd z = lu.kernel().col(0);
    if (z.maxCoeff() <= 0.0) z = -z;
    // Move along z until the first weight reaches zero.
    double t = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < n; ++k)
      if (z[k] > 0.0) t = std::min(t, atoms[static_cast<std::size_t>(k)].weight / z[k]);
    for (Eigen::Index k = 0; k < n; ++k) atoms[static_cast<std::size_t>(k)].weight -= t * z[k];
    Eigen::Index worst = 0;
    for (Eigen::Index k = 1; k < n; ++k)
      if (atoms[static_cast<std::size_t>(k)].weight < atoms[static_cast<std::size_t>(worst)].weight) worst = k;
    atoms[static_cast<std::size_t>(worst)].weight = 0.0;
  }
  double s = 0.0;
  for (auto& a : atoms) s += a.weight;
  for (auto& a : atoms) a.weight /= s;
}

namespace detail {

// Point of minimum norm on the affine hull of the atoms, as affine weights.
template <class Payload>
Eigen::VectorXd affine_minimizer(const std::vector<HullAtom<Payload>>& atoms) {
  const Eigen::Index n = static_cast<Eigen::Index>(atoms.size());
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n);
  if (n == 1) {
    mu[0] = 1.0;
    return mu;
  }
  const Eigen::VectorXd& s0 = atoms.front().point;
  Eigen::MatrixXd D(s0.size(), n - 1);
  for (Eigen::Index k = 1; k < n; ++k) D.col(k - 1) = atoms[static_cast<std::size_t>(k)].point - s0;
  Eigen::VectorXd c = D.completeOrthogonalDecomposition().solve(-s0);
  mu[0] = 1.0 - c.sum();
  mu.tail(n - 1) = c;
  return mu;
}

template <class Payload>
Eigen::VectorXd combine(const std::vector<HullAtom<Payload>>& atoms) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(atoms.front().point.size());
  for (const auto& a : atoms) x += a.weight * a.point;
  return x;
}

}  // namespace detail

// Wolfe's method for min ‖x‖ over conv(S). `lmo(d)` returns a pair (s, payload) with s ∈ S
// minimizing <d, s>. `start` must be nonempty with weights summing to one.
template <class Payload, class Lmo>
MinNormResult<Payload> min_norm_point(Lmo&& lmo, std::vector<HullAtom<Payload>> start, MinNormOptions opt = {}) {
  MinNormResult<Payload> res;
  res.atoms = std::move(start);
  caratheodory_prune(res.atoms);
  Eigen::VectorXd x = detail::combine(res.atoms);
  const Eigen::Index dim = x.size();
  double best_lower = -std::numeric_limits<double>::infinity();

  for (int it = 0;; ++it) {
    res.iterations = it;
    const double ub = x.norm();
    res.x = x;
    res.upper = ub;
    res.lower = std::max(0.0, best_lower);
    if (ub <= opt.inside_tol) {
      res.status = HullStatus::inside;
      break;
    }
    if (it >= opt.max_iterations) {
      res.status = HullStatus::iteration_cap;
      break;
    }
    auto [s, payload] = lmo(x);
    const double xs = x.dot(s);
    best_lower = std::max(best_lower, xs / ub);
    res.lower = std::max(0.0, best_lower);
    if (best_lower > opt.outside_tol) {
      res.status = HullStatus::outside;
      break;
    }
    if (ub - best_lower <= opt.gap_tol) {
      res.status = HullStatus::converged;
      break;
    }
    double scale = s.norm();
    bool duplicate = false;
    for (const auto& a : res.atoms) {
      scale = std::max(scale, a.point.norm());
      if ((a.point - s).norm() <= 1e-15 * (1.0 + s.norm())) duplicate = true;
    }
    // No descent left: below this gap x is not resolved any better in floating point.
    if (ub - xs / ub <= 1e-15 * scale) {
      res.status = HullStatus::stalled;
      break;
    }
    // A returned corral atom means the weights are not yet affine-optimal; the minor cycle fixes that.
    if (!duplicate) res.atoms.push_back(HullAtom<Payload>{s, std::move(payload), 0.0});

    for (int minor = 0; minor < 4 * static_cast<int>(dim) + 8; ++minor) {
      Eigen::VectorXd mu = detail::affine_minimizer(res.atoms);
      const Eigen::Index n = mu.size();
      if (mu.minCoeff() > 1e-14) {
        for (Eigen::Index k = 0; k < n; ++k) res.atoms[static_cast<std::size_t>(k)].weight = mu[k];
        break;
      }
      // Step from the current weights toward mu until the first weight hits zero.
      double theta = 1.0;
      for (Eigen::Index k = 0; k < n; ++k) {
        const double w = res.atoms[static_cast<std::size_t>(k)].weight;
        if (mu[k] <= 1e-14 && w - mu[k] > 0.0) theta = std::min(theta, w / (w - mu[k]));
      }
      for (Eigen::Index k = 0; k < n; ++k) {
        double& w = res.atoms[static_cast<std::size_t>(k)].weight;
        w = (1.0 - theta) * w + theta * mu[k];
      }
      // Drop the atoms that reached zero (at least one).
      Eigen::Index worst = 0;
      for (Eigen::Index k = 1; k < n; ++k)
        if (res.atoms[static_cast<std::size_t>(k)].weight < res.atoms[static_cast<std::size_t>(worst)].weight) worst = k;
      res.atoms[static_cast<std::size_t>(worst)].weight = 0.0;
      res.atoms.erase(std::remove_if(res.atoms.begin(), res.atoms.end(),
                                     [](const HullAtom<Payload>& a) { return a.weight <= 1e-16; }),
                      res.atoms.end());
      double sum = 0.0;
      for (auto& a : res.atoms) sum += a.weight;
      for (auto& a : res.atoms) a.weight /= sum;
    }
    if (static_cast<Eigen::Index>(res.atoms.size()) > dim + 1) caratheodory_prune(res.atoms);
    Eigen::VectorXd nx = detail::combine(res.atoms);
    const bool progress = nx.norm() < ub * (1.0 - 1e-15);
    x = nx;
    if (!progress) {
      // Rounding stopped the descent.
      res.x = x;
      res.upper = x.norm();
      res.status = HullStatus::stalled;
      break;
    }
  }
  return res;
}

}  // namespace detpol
