#pragma once

// Finite measures with piecewise-uniform densities on interval partitions of [0,1].
//
// Every measure here is atomless: the density is constant on each interval, so a
// singleton has mass zero and sub-interval masses split linearly. All operations are
// exact up to floating-point rounding; nothing is discretized.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "detpol/error.hpp"

namespace detpol {

// Breakpoints 0 = t_0 < t_1 < ... < t_K = 1 (K >= 1).
class StatePartition {
 public:
  // Breakpoints closer than this are merged by refine().
  static constexpr double kMergeTolerance = 1e-12;

  StatePartition() : breakpoints_{0.0, 1.0} {}

  explicit StatePartition(std::vector<double> breakpoints) : breakpoints_(std::move(breakpoints)) {
    if (breakpoints_.size() < 2) throw ValidationError("breakpoints", "need at least two breakpoints");
    if (breakpoints_.front() != 0.0) throw ValidationError("breakpoints[0]", "first breakpoint must be 0");
    if (breakpoints_.back() != 1.0) throw ValidationError("breakpoints", "last breakpoint must be 1");
    for (std::size_t k = 1; k < breakpoints_.size(); ++k) {
      if (!(breakpoints_[k] > breakpoints_[k - 1])) {
        throw ValidationError("breakpoints[" + std::to_string(k) + "]", "breakpoints must be strictly increasing");
      }
    }
  }

  static StatePartition uniform(std::size_t cells) {
    std::vector<double> t(cells + 1);
    for (std::size_t k = 0; k <= cells; ++k) t[k] = static_cast<double>(k) / static_cast<double>(cells);
    t.back() = 1.0;
    return StatePartition(std::move(t));
  }

  // Number of intervals.
  std::size_t size() const noexcept { return breakpoints_.size() - 1; }
  double lo(std::size_t k) const noexcept { return breakpoints_[k]; }
  double hi(std::size_t k) const noexcept { return breakpoints_[k + 1]; }
  double length(std::size_t k) const noexcept { return breakpoints_[k + 1] - breakpoints_[k]; }
  const std::vector<double>& breakpoints() const noexcept { return breakpoints_; }

  // Index of the interval [t_k, t_{k+1}) containing x; x = 1 maps to the last interval.
  std::size_t locate(double x) const noexcept {
    auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), x);
    if (it == breakpoints_.begin()) return 0;
    std::size_t k = static_cast<std::size_t>(it - breakpoints_.begin()) - 1;
    return std::min(k, size() - 1);
  }

  // True when every breakpoint of `coarser` is (within the merge tolerance) one of ours.
  bool refines(const StatePartition& coarser) const noexcept {
    std::size_t j = 0;
    for (double t : coarser.breakpoints_) {
      while (j < breakpoints_.size() && breakpoints_[j] < t - kMergeTolerance) ++j;
      if (j == breakpoints_.size() || std::abs(breakpoints_[j] - t) > kMergeTolerance) return false;
    }
    return true;
  }

  bool contains_breakpoint(double x) const noexcept {
    auto it = std::lower_bound(breakpoints_.begin(), breakpoints_.end(), x - kMergeTolerance);
    return it != breakpoints_.end() && std::abs(*it - x) <= kMergeTolerance;
  }

  friend bool operator==(const StatePartition& a, const StatePartition& b) { return a.breakpoints_ == b.breakpoints_; }

 private:
  std::vector<double> breakpoints_;
};

// Coarsest common refinement. Breakpoints of `a` win over nearby breakpoints of `b`.
inline StatePartition refine(const StatePartition& a, const StatePartition& b) {
  const auto& ta = a.breakpoints();
  const auto& tb = b.breakpoints();
  std::vector<double> out;
  out.reserve(ta.size() + tb.size());
  std::size_t j = 0;
  for (std::size_t i = 0; i + 1 < ta.size(); ++i) {
    out.push_back(ta[i]);
    while (j < tb.size() && tb[j] <= ta[i] + StatePartition::kMergeTolerance) ++j;
    while (j < tb.size() && tb[j] < ta[i + 1] - StatePartition::kMergeTolerance) {
      if (tb[j] - out.back() > StatePartition::kMergeTolerance) out.push_back(tb[j]);
      ++j;
    }
  }
  out.push_back(1.0);
  return StatePartition(std::move(out));
}

// Partition with breakpoint x inserted (no-op when x is already a breakpoint).
inline StatePartition with_breakpoint(const StatePartition& p, double x) {
  if (x <= StatePartition::kMergeTolerance || x >= 1.0 - StatePartition::kMergeTolerance) return p;
  return refine(p, StatePartition({0.0, x, 1.0}));
}

// Calls f(i, j, lo, hi) for every interval i of `a` and j of `b` that overlap with positive length.
template <class F>
void for_each_overlap(const StatePartition& a, const StatePartition& b, F&& f) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    double lo = std::max(a.lo(i), b.lo(j));
    double hi = std::min(a.hi(i), b.hi(j));
    if (hi > lo) f(i, j, lo, hi);
    if (a.hi(i) < b.hi(j)) {
      ++i;
    } else if (b.hi(j) < a.hi(i)) {
      ++j;
    } else {
      ++i;
      ++j;
    }
  }
}

// For each interval of `fine`, the interval of `coarse` containing its midpoint.
inline std::vector<std::size_t> parent_intervals(const StatePartition& fine, const StatePartition& coarse) {
  std::vector<std::size_t> parent(fine.size());
  for (std::size_t k = 0; k < fine.size(); ++k) parent[k] = coarse.locate(0.5 * (fine.lo(k) + fine.hi(k)));
  return parent;
}

// Nonnegative finite measure with constant density on each interval of its partition.
class PieceMeasure {
 public:
  PieceMeasure() : masses_{0.0} {}

  PieceMeasure(StatePartition partition, std::vector<double> masses)
      : partition_(std::move(partition)), masses_(std::move(masses)) {
    if (masses_.size() != partition_.size()) {
      throw ValidationError("masses", "expected " + std::to_string(partition_.size()) + " masses, got " +
                                          std::to_string(masses_.size()));
    }
    for (std::size_t k = 0; k < masses_.size(); ++k) {
      if (!(masses_[k] >= 0.0) || !std::isfinite(masses_[k])) {
        throw ValidationError("masses[" + std::to_string(k) + "]", "mass must be finite and nonnegative");
      }
    }
  }

  static PieceMeasure uniform(double total = 1.0) { return PieceMeasure(StatePartition(), {total}); }
  static PieceMeasure zero(const StatePartition& p) { return PieceMeasure(p, std::vector<double>(p.size(), 0.0)); }

  const StatePartition& partition() const noexcept { return partition_; }
  const std::vector<double>& masses() const noexcept { return masses_; }
  double mass(std::size_t k) const noexcept { return masses_[k]; }
  double density(std::size_t k) const noexcept { return masses_[k] / partition_.length(k); }
  double total() const noexcept { return std::accumulate(masses_.begin(), masses_.end(), 0.0); }

  // Mass of [a, b] (0 when b <= a).
  double interval_mass(double a, double b) const noexcept {
    if (!(b > a)) return 0.0;
    double sum = 0.0;
    for (std::size_t k = partition_.locate(a); k < partition_.size() && partition_.lo(k) < b; ++k) {
      double lo = std::max(a, partition_.lo(k));
      double hi = std::min(b, partition_.hi(k));
      if (hi > lo) sum += masses_[k] * ((hi - lo) / partition_.length(k));
    }
    return sum;
  }

  // The same measure expressed on `target`; exact when `target` refines our partition.
  PieceMeasure on(const StatePartition& target) const {
    std::vector<double> out(target.size(), 0.0);
    for_each_overlap(partition_, target, [&](std::size_t i, std::size_t j, double lo, double hi) {
      if (masses_[i] > 0.0) out[j] += masses_[i] * ((hi - lo) / partition_.length(i));
    });
    return PieceMeasure(target, std::move(out));
  }

  PieceMeasure scaled(double factor) const {
    std::vector<double> out(masses_);
    for (double& m : out) m *= factor;
    return PieceMeasure(partition_, std::move(out));
  }

  friend bool operator==(const PieceMeasure& a, const PieceMeasure& b) {
    return a.partition_ == b.partition_ && a.masses_ == b.masses_;
  }

 private:
  StatePartition partition_;
  std::vector<double> masses_;
};

// Unnormalized distribution function b -> m([0, b]).
inline double cdf(const PieceMeasure& m, double b) {
  if (!(b >= 0.0 && b <= 1.0)) throw DomainError("cdf: coordinate " + std::to_string(b) + " outside [0,1]");
  return m.interval_mass(0.0, b);
}

inline double mass_below(const PieceMeasure& m, double b) { return m.interval_mass(0.0, std::clamp(b, 0.0, 1.0)); }

// The same measure on the partition refined by breakpoint b.
inline PieceMeasure split_at(const PieceMeasure& m, double b) {
  return m.on(with_breakpoint(m.partition(), std::clamp(b, 0.0, 1.0)));
}

struct QuantileRange {
  double b_min;
  double b_max;
};

// The level set F^{-1}(α) = [b_min, b_max] of the normalized distribution function.
inline QuantileRange quantile(const PieceMeasure& m, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("quantile: level " + std::to_string(alpha) + " outside [0,1]");
  const auto& p = m.partition();
  const auto& w = m.masses();
  const std::size_t K = p.size();
  std::vector<double> cum(K + 1, 0.0);
  for (std::size_t k = 0; k < K; ++k) cum[k + 1] = cum[k] + w[k];
  const double total = cum[K];
  if (!(total > 0.0)) throw DegenerateMeasureError("quantile of a measure with zero total mass");
  const double tau = alpha * total;

  // Position inside interval k where the cumulative mass reaches tau.
  auto inside = [&](std::size_t k) {
    double frac = std::clamp((tau - cum[k]) / w[k], 0.0, 1.0);
    return std::min(p.hi(k), p.lo(k) + frac * p.length(k));
  };

  QuantileRange r{0.0, 1.0};
  if (alpha > 0.0) {
    r.b_min = 1.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (w[k] > 0.0 && (cum[k + 1] >= tau || k + 1 == K)) {
        r.b_min = inside(k);
        break;
      }
    }
  }
  if (alpha < 1.0) {
    r.b_max = 1.0;
    for (std::size_t k = 0; k < K; ++k) {
      if (w[k] > 0.0 && cum[k + 1] > tau) {
        r.b_max = inside(k);
        break;
      }
    }
  }
  r.b_max = std::max(r.b_max, r.b_min);
  return r;
}

// |m1 - m2|(X), computed on the common refinement.
inline double total_variation(const PieceMeasure& m1, const PieceMeasure& m2) {
  const StatePartition common = refine(m1.partition(), m2.partition());
  const PieceMeasure a = m1.on(common);
  const PieceMeasure b = m2.on(common);
  double tv = 0.0;
  for (std::size_t k = 0; k < common.size(); ++k) tv += std::abs(a.mass(k) - b.mass(k));
  return tv;
}

}  // namespace detpol
