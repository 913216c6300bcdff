#pragma once

// Ranges of finite atomless vector measures ν(B) = ∫_B r dμ on [0,1], through the one-step
// MDP whose deterministic policies are the sets B = {x : φ(x) = 1}.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "detpol/derandomize.hpp"
#include "detpol/error.hpp"
#include "detpol/measure.hpp"
#include "detpol/model.hpp"
#include "detpol/model_io.hpp"
#include "detpol/scalar_dp.hpp"

namespace detpol {

struct VectorMeasure {
  PieceMeasure base;                          // μ
  std::vector<std::vector<double>> densities;  // r on each interval of base.partition()

  int dimension() const { return densities.empty() ? 0 : static_cast<int>(densities.front().size()); }
};

inline void validate(const VectorMeasure& vm) {
  const std::size_t K = vm.base.partition().size();
  if (vm.densities.size() != K) throw ValidationError("densities", "one density vector per base interval expected");
  if (vm.dimension() < 1) throw ValidationError("densities[0]", "at least one coordinate expected");
  for (std::size_t k = 0; k < K; ++k) {
    const std::string p = "densities[" + std::to_string(k) + "]";
    if (static_cast<int>(vm.densities[k].size()) != vm.dimension()) throw ValidationError(p, "wrong number of coordinates");
    for (std::size_t n = 0; n < vm.densities[k].size(); ++n) {
      const double r = vm.densities[k][n];
      if (!std::isfinite(r) || r < 0.0) throw ValidationError(p + "[" + std::to_string(n) + "]", "densities must be finite and nonnegative");
    }
  }
  if (!(vm.base.total() > 0.0)) throw ValidationError("base", "measure has no mass");
}

// μ = Lebesgue on a uniform grid of `cells` intervals, r evaluated at cell averages of f.
template <class F>
VectorMeasure lebesgue_vector_measure(std::size_t cells, F&& cell_average) {
  StatePartition g = StatePartition::uniform(cells);
  VectorMeasure vm;
  std::vector<double> len;
  for (std::size_t k = 0; k < cells; ++k) {
    len.push_back(g.length(k));
    vm.densities.push_back(cell_average(g.lo(k), g.hi(k)));
  }
  vm.base = PieceMeasure(g, std::move(len));
  return vm;
}

// r = (1, 2x) under Lebesgue measure; the second density is exact on every cell-aligned set.
inline VectorMeasure linear_density_example(std::size_t cells = 64) {
  return lebesgue_vector_measure(cells, [](double lo, double hi) { return std::vector<double>{1.0, lo + hi}; });
}

struct IntervalSet {
  std::vector<std::pair<double, double>> intervals;  // disjoint, sorted, nonempty

  friend bool operator==(const IntervalSet&, const IntervalSet&) = default;
};

// Sorted, merged, empty pieces dropped.
inline IntervalSet normalized(std::vector<std::pair<double, double>> iv) {
  std::sort(iv.begin(), iv.end());
  IntervalSet out;
  for (auto [lo, hi] : iv) {
    if (!(hi > lo)) continue;
    if (!out.intervals.empty() && lo <= out.intervals.back().second) {
      out.intervals.back().second = std::max(out.intervals.back().second, hi);
    } else {
      out.intervals.emplace_back(lo, hi);
    }
  }
  return out;
}

// ν(B) by direct integration over the base intervals.
inline Eigen::VectorXd measure_of(const VectorMeasure& vm, const IntervalSet& B) {
  const StatePartition& P = vm.base.partition();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(vm.dimension());
  for (auto [lo, hi] : B.intervals) {
    for (std::size_t k = 0; k < P.size(); ++k) {
      const double a = std::max(lo, P.lo(k)), b = std::min(hi, P.hi(k));
      if (b <= a) continue;
      const double mass = vm.base.mass(k) * (b - a) / P.length(k);
      for (int n = 0; n < vm.dimension(); ++n) out[n] += mass * vm.densities[k][static_cast<std::size_t>(n)];
    }
  }
  return out;
}

// Actions {0, 1}, immediate absorption, r(x, 0) = 0, r(x, 1) = r(x). μ is rescaled to a
// probability measure and r by the same factor, so performance vectors equal ν(B).
inline AtomlessMDP as_onestep_mdp(const VectorMeasure& vm) {
  validate(vm);
  const double total = vm.base.total();
  AtomlessMDP::Spec s;
  s.grid = vm.base.partition();
  s.actions = 2;
  s.note = "one-step model of a vector measure";
  const std::size_t K = s.grid.size();
  s.available.assign(K, {0, 1});
  s.kernel.assign(K, {KernelRow{PieceMeasure(), 1.0}, KernelRow{PieceMeasure(), 1.0}});
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> r = vm.densities[k];
    for (double& x : r) x *= total;
    s.rewards.push_back({std::vector<double>(r.size(), 0.0), std::move(r)});
  }
  s.initial = vm.base.scaled(1.0 / total);
  return AtomlessMDP(std::move(s));
}

// B^φ = {x : φ(x) = 1}.
inline IntervalSet set_of(const DeterministicPolicy& phi) {
  std::vector<std::pair<double, double>> iv;
  for (std::size_t k = 0; k < phi.partition.size(); ++k)
    if (phi.actions[k] == 1) iv.emplace_back(phi.partition.lo(k), phi.partition.hi(k));
  return normalized(std::move(iv));
}

// The indicator policy of B on a refinement of `grid`.
inline DeterministicPolicy policy_of(const IntervalSet& B, const StatePartition& grid) {
  StatePartition P = grid;
  for (auto [lo, hi] : B.intervals) P = with_breakpoint(with_breakpoint(P, lo), hi);
  DeterministicPolicy phi{P, {}};
  for (std::size_t k = 0; k < P.size(); ++k) {
    const double mid = 0.5 * (P.lo(k) + P.hi(k));
    bool in = false;
    for (auto [lo, hi] : B.intervals) in = in || (mid > lo && mid < hi);
    phi.actions.push_back(in ? 1 : 0);
  }
  return phi;
}

// Unit directions: ±1 for N = 1, equally spaced angles for N = 2, ±e_n plus seeded Gaussian
// directions otherwise.
inline std::vector<Eigen::VectorXd> spread_directions(int N, std::size_t count) {
  std::vector<Eigen::VectorXd> out;
  if (N == 1) {
    out.push_back(Eigen::VectorXd::Constant(1, 1.0));
    out.push_back(Eigen::VectorXd::Constant(1, -1.0));
    return out;
  }
  if (N == 2) {
    for (std::size_t k = 0; k < count; ++k) {
      const double t = 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(count);
      Eigen::VectorXd d(2);
      d << std::cos(t), std::sin(t);
      out.push_back(d);
    }
    return out;
  }
  for (int n = 0; n < N && out.size() < count; ++n) {
    out.push_back(Eigen::VectorXd::Unit(N, n));
    out.push_back(-Eigen::VectorXd::Unit(N, n));
  }
  std::mt19937_64 gen(count);
  auto unit = [&]() { return (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53; };
  while (out.size() < count) {
    Eigen::VectorXd d(N);
    for (int n = 0; n < N; ++n) d[n] = std::sqrt(-2.0 * std::log(unit())) * std::cos(2.0 * M_PI * unit());
    out.push_back(d / d.norm());
  }
  return out;
}

namespace detail {

inline double cross(const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

inline double segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double L2 = ab.squaredNorm();
  const double t = L2 > 0.0 ? std::clamp((p - a).dot(ab) / L2, 0.0, 1.0) : 0.0;
  return (a + t * ab - p).norm();
}

// Distance from p to a convex polygon given counterclockwise (0 inside).
inline double polygon_distance(const std::vector<Eigen::VectorXd>& poly, const Eigen::VectorXd& p) {
  const std::size_t n = poly.size();
  if (n == 0) return std::numeric_limits<double>::infinity();
  const Eigen::Vector2d q = p.head<2>();
  if (n == 1) return (poly[0].head<2>() - q).norm();
  bool inside = n >= 3;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    const Eigen::Vector2d a = poly[k].head<2>(), b = poly[(k + 1) % n].head<2>();
    if (cross(b - a, q - a) < 0.0) inside = false;
    best = std::min(best, segment_distance(q, a, b));
  }
  return inside ? 0.0 : best;
}

// Andrew's monotone chain, counterclockwise, collinear points dropped.
inline std::vector<Eigen::VectorXd> convex_hull_2d(std::vector<Eigen::VectorXd> pts, double eps = 1e-14) {
  std::sort(pts.begin(), pts.end(), [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return a[0] < b[0] || (a[0] == b[0] && a[1] < b[1]);
  });
  if (pts.size() < 3) return pts;
  std::vector<Eigen::VectorXd> h(2 * pts.size());
  std::size_t k = 0;
  auto turn = [](const Eigen::VectorXd& o, const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
  };
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && turn(h[k - 2], h[k - 1], pts[i]) <= eps) --k;
    h[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && turn(h[k - 2], h[k - 1], pts[i - 1]) <= eps) --k;
    h[k++] = pts[i - 1];
  }
  h.resize(k - 1);
  return h;
}

}  // namespace detail

struct RangeHull {
  std::vector<Eigen::VectorXd> directions;
  std::vector<double> support;             // h(d) = max over B of <d, ν(B)>
  std::vector<Eigen::VectorXd> vertices;   // ν(B_d) for the maximizing set of each direction
  std::vector<IntervalSet> vertex_sets;
  std::vector<Eigen::VectorXd> inner;      // N <= 2: inner polytope (segment or counterclockwise polygon)
  std::vector<Eigen::VectorXd> outer;      // N <= 2: outer polytope, same layout
  double gap = std::numeric_limits<double>::quiet_NaN();  // Hausdorff distance inner/outer, N <= 2

  // p satisfies every supporting half-space within tol.
  bool outer_contains(const Eigen::VectorXd& p, double tol = 0.0) const {
    for (std::size_t k = 0; k < directions.size(); ++k)
      if (directions[k].dot(p) > support[k] + tol) return false;
    return true;
  }
  // Largest violation max_k <d_k, p> - h(d_k) (negative inside).
  double outer_excess(const Eigen::VectorXd& p) const {
    double e = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < directions.size(); ++k) e = std::max(e, directions[k].dot(p) - support[k]);
    return e;
  }
};

inline RangeHull range_hull(const VectorMeasure& vm, std::size_t direction_count) {
  const int N = vm.dimension();
  validate(vm);
  if (direction_count < static_cast<std::size_t>(N) + 1) throw DomainError("range_hull: at least N + 1 directions are needed");
  const AtomlessMDP m = as_onestep_mdp(vm);
  RangeHull H;
  H.directions = spread_directions(N, direction_count);
  for (const auto& d : H.directions) {
    Support s = support(m, d);
    IntervalSet B = set_of(s.policy);
    H.vertex_sets.push_back(B);
    H.vertices.push_back(measure_of(vm, B));
    H.support.push_back(s.h);
  }
  if (N == 1) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& v : H.vertices) {
      lo = std::min(lo, v[0]);
      hi = std::max(hi, v[0]);
    }
    H.inner = {Eigen::VectorXd::Constant(1, lo), Eigen::VectorXd::Constant(1, hi)};
    H.outer = {Eigen::VectorXd::Constant(1, -H.support[1]), Eigen::VectorXd::Constant(1, H.support[0])};
    H.gap = std::max(std::abs(H.outer[0][0] - lo), std::abs(H.outer[1][0] - hi));
  } else if (N == 2) {
    H.inner = detail::convex_hull_2d(H.vertices);
    const std::size_t K = H.directions.size();
    for (std::size_t k = 0; k < K; ++k) {
      const auto& a = H.directions[k];
      const auto& b = H.directions[(k + 1) % K];
      Eigen::Matrix2d A;
      A << a[0], a[1], b[0], b[1];
      H.outer.push_back(A.inverse() * Eigen::Vector2d(H.support[k], H.support[(k + 1) % K]));
    }
    H.gap = 0.0;
    for (const auto& v : H.outer) H.gap = std::max(H.gap, detail::polygon_distance(H.inner, v));
  }
  return H;
}

// A finite union of intervals B with ‖ν(B) - target‖ <= tol, checked by direct integration.
inline IntervalSet find_set(const VectorMeasure& vm, const Eigen::VectorXd& target, double tol = 1e-8) {
  validate(vm);
  if (target.size() != vm.dimension()) throw DomainError("target has the wrong number of coordinates");
  const AtomlessMDP m = as_onestep_mdp(vm);
  DerandomizeOptions opt;
  opt.tol = tol;
  MixResult r = realize(m, target, opt);
  IntervalSet B = set_of(r.policy);
  const double err = (measure_of(vm, B) - target).norm();
  if (err > tol) throw CertifiedFailure("find_set: the returned set misses the target", err);
  return B;
}

struct BruteForceRange {
  std::vector<std::uint32_t> masks;    // bit c set: base interval c belongs to B
  std::vector<Eigen::VectorXd> points;  // ν(B) per mask
  std::vector<Eigen::VectorXd> hull;    // N = 1: [min, max]; N = 2: counterclockwise polygon
};

// ν over every union of base intervals.
inline BruteForceRange brute_force_range(const VectorMeasure& vm) {
  validate(vm);
  const std::size_t M = vm.base.partition().size();
  if (M > 12) throw DomainError("brute_force_range: at most 12 base intervals");
  const int N = vm.dimension();
  BruteForceRange out;
  for (std::uint32_t mask = 0; mask < (1u << M); ++mask) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(N);
    for (std::size_t c = 0; c < M; ++c)
      if (mask & (1u << c))
        for (int n = 0; n < N; ++n) v[n] += vm.base.mass(c) * vm.densities[c][static_cast<std::size_t>(n)];
    out.masks.push_back(mask);
    out.points.push_back(v);
  }
  if (N == 1) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& v : out.points) {
      lo = std::min(lo, v[0]);
      hi = std::max(hi, v[0]);
    }
    out.hull = {Eigen::VectorXd::Constant(1, lo), Eigen::VectorXd::Constant(1, hi)};
  } else if (N == 2) {
    out.hull = detail::convex_hull_2d(out.points);
  }
  return out;
}

inline IntervalSet cell_set(const VectorMeasure& vm, std::uint32_t mask) {
  const StatePartition& P = vm.base.partition();
  std::vector<std::pair<double, double>> iv;
  for (std::size_t c = 0; c < P.size(); ++c)
    if (mask & (1u << c)) iv.emplace_back(P.lo(c), P.hi(c));
  return normalized(std::move(iv));
}

// Densities file: {"grid": [0, ..., 1], "densities": [[r_1, ..., r_N], ...], "base": [m_0, ...]}.
// "base" defaults to Lebesgue measure on the grid.
inline VectorMeasure vector_measure_from_json(const Json& doc) {
  using namespace detail;
  const Json& g = array(field(doc, "grid", ""), "grid");
  std::vector<double> t;
  for (std::size_t k = 0; k < g.size(); ++k) t.push_back(number(g[k], idx("grid", k)));
  StatePartition P;
  try {
    P = StatePartition(t);
  } catch (const Error& e) {
    throw ValidationError("grid", e.what());
  }
  VectorMeasure vm;
  const Json& d = array(field(doc, "densities", ""), "densities");
  for (std::size_t k = 0; k < d.size(); ++k) {
    const Json& row = array(d[k], idx("densities", k));
    std::vector<double> r;
    for (std::size_t n = 0; n < row.size(); ++n) r.push_back(number(row[n], idx(idx("densities", k), n)));
    vm.densities.push_back(std::move(r));
  }
  std::vector<double> masses;
  if (doc.contains("base")) {
    const Json& b = array(doc.at("base"), "base");
    if (b.size() != P.size()) throw ValidationError("base", "one mass per grid interval expected");
    for (std::size_t k = 0; k < b.size(); ++k) {
      masses.push_back(number(b[k], idx("base", k)));
      if (masses.back() < 0.0) throw ValidationError(idx("base", k), "negative mass");
    }
  } else {
    for (std::size_t k = 0; k < P.size(); ++k) masses.push_back(P.length(k));
  }
  vm.base = PieceMeasure(P, std::move(masses));
  validate(vm);
  return vm;
}

inline Json vector_measure_to_json(const VectorMeasure& vm) {
  Json doc;
  doc["grid"] = vm.base.partition().breakpoints();
  doc["densities"] = vm.densities;
  Json b = Json::array();
  for (std::size_t k = 0; k < vm.base.partition().size(); ++k) b.push_back(vm.base.mass(k));
  doc["base"] = b;
  return doc;
}

inline std::string format_set(const IntervalSet& B) {
  std::string out = "# set\n";
  for (auto [lo, hi] : B.intervals) out += format_number(lo) + " " + format_number(hi) + "\n";
  return out;
}

}  // namespace detpol
