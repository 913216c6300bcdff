#pragma once

// Deterministic realization of performance vectors.
//
// mix_pair(φ0, φ1, λ) returns a deterministic policy whose performance is
// λ v^{φ0} + (1 - λ) v^{φ1}. With one criterion it bisects along the threshold path φ_α
// (φ1 below the α-quantile of the averaged occupancy q, φ0 above). With N criteria it freezes
// the path to the largest α at which the target is still attainable, where the target sits on the
// boundary of the attainable set; a supporting direction there defines a conserving submodel on
// which one coordinate is an affine function of the others, and the problem recurses with N - 1
// criteria. derandomize(π) splits v^π into at most N + 1 deterministic vectors and folds
// mix_pair over them.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "detpol/error.hpp"
#include "detpol/hull.hpp"
#include "detpol/measure.hpp"
#include "detpol/model.hpp"
#include "detpol/occupancy.hpp"
#include "detpol/scalar_dp.hpp"

namespace detpol {

struct TwoPolicyContext {
  const AtomlessMDP* model = nullptr;
  DeterministicPolicy phi0;
  DeterministicPolicy phi1;
  StationaryPolicy pi_star;  // ½ φ0 + ½ φ1 on every interval
  PieceMeasure q;            // state occupancy of pi_star, on the measure grid
  AbsorptionCertificate cert;
};

inline TwoPolicyContext make_context(const AtomlessMDP& m, const AbsorptionCertificate& cert, const DeterministicPolicy& phi0,
                                     const DeterministicPolicy& phi1) {
  validate(phi0, m);
  validate(phi1, m);
  TwoPolicyContext ctx;
  ctx.model = &m;
  ctx.phi0 = phi0;
  ctx.phi1 = phi1;
  ctx.cert = cert;
  StatePartition P = refine(phi0.partition, phi1.partition);
  auto p0 = parent_intervals(P, phi0.partition);
  auto p1 = parent_intervals(P, phi1.partition);
  ctx.pi_star.partition = P;
  for (std::size_t k = 0; k < P.size(); ++k) {
    std::vector<double> pr(static_cast<std::size_t>(m.actions()), 0.0);
    pr[static_cast<std::size_t>(phi0.actions[p0[k]])] += 0.5;
    pr[static_cast<std::size_t>(phi1.actions[p1[k]])] += 0.5;
    ctx.pi_star.probs.push_back(std::move(pr));
  }
  ctx.q = PieceMeasure(m.measure_grid(), detail::state_occupancy(m, detail::fractions(m, ctx.pi_star)));
  return ctx;
}

inline TwoPolicyContext make_context(const AtomlessMDP& m, const DeterministicPolicy& phi0, const DeterministicPolicy& phi1) {
  return make_context(m, absorption_certificate(m), phi0, phi1);
}

// b_min of the α-quantile of q; the path switches from φ1 to φ0 there.
inline double path_threshold(const TwoPolicyContext& ctx, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw DomainError("path: α = " + std::to_string(alpha) + " outside [0,1]");
  if (alpha == 0.0) return 0.0;
  return quantile(ctx.q, alpha).b_min;
}

// `phi` with the action of `below` on [0, b).
inline DeterministicPolicy splice_below(const DeterministicPolicy& below, const DeterministicPolicy& phi, double b,
                                        const StatePartition& grid) {
  StatePartition P = with_breakpoint(refine(below.partition, phi.partition), b);
  auto pb = parent_intervals(P, below.partition);
  auto pp = parent_intervals(P, phi.partition);
  DeterministicPolicy out{P, {}};
  for (std::size_t k = 0; k < P.size(); ++k) {
    const double mid = 0.5 * (P.lo(k) + P.hi(k));
    out.actions.push_back(mid < b ? below.actions[pb[k]] : phi.actions[pp[k]]);
  }
  return canonical(out, grid);
}

// φ_α: φ1 below the threshold, φ0 above. φ_0 = φ0 exactly.
inline DeterministicPolicy path_policy(const TwoPolicyContext& ctx, double alpha) {
  const double b = path_threshold(ctx, alpha);
  if (b <= 0.0) return ctx.phi0;
  return splice_below(ctx.phi1, ctx.phi0, b, ctx.model->grid());
}

// A^α: only φ1 below the threshold, both φ0 and φ1 above.
inline SubmodelSpec alpha_submodel(const TwoPolicyContext& ctx, double alpha) {
  const double b = path_threshold(ctx, alpha);
  StatePartition P = with_breakpoint(refine(ctx.phi0.partition, ctx.phi1.partition), b);
  auto p0 = parent_intervals(P, ctx.phi0.partition);
  auto p1 = parent_intervals(P, ctx.phi1.partition);
  SubmodelSpec sub{P, {}};
  for (std::size_t k = 0; k < P.size(); ++k) {
    const double mid = 0.5 * (P.lo(k) + P.hi(k));
    ActionSet s = single_action(ctx.phi1.actions[p1[k]]);
    if (mid >= b) s |= single_action(ctx.phi0.actions[p0[k]]);
    sub.allowed.push_back(s);
  }
  return canonical(sub, ctx.model->grid());
}

// `sub` with the actions of `phi` added.
inline SubmodelSpec with_policy(const SubmodelSpec& sub, const DeterministicPolicy& phi, const StatePartition& grid) {
  StatePartition P = refine(sub.partition, phi.partition);
  auto ps = parent_intervals(P, sub.partition);
  auto pp = parent_intervals(P, phi.partition);
  SubmodelSpec out{P, {}};
  for (std::size_t k = 0; k < P.size(); ++k) out.allowed.push_back(sub.allowed[ps[k]] | single_action(phi.actions[pp[k]]));
  return canonical(out, grid);
}

// Certified bound on d_TV(Q^{φ_α}, Q^{φ_{α+Δ}}) for every α: 2 min_ℓ [tail(ℓ) + 2^ℓ q(X) Δ].
inline double tv_modulus(const TwoPolicyContext& ctx, double delta) {
  if (!(delta >= 0.0)) throw DomainError("tv_modulus: Δ must be nonnegative");
  const double qx = ctx.q.total();
  double best = std::numeric_limits<double>::infinity();
  for (int l = 0; l <= 64; ++l) best = std::min(best, ctx.cert.tail(static_cast<std::size_t>(l)) + std::ldexp(qx * delta, l));
  return 2.0 * best;
}

// Largest Δ (up to a factor of two) with tv_modulus(Δ) <= bound; 0 when no positive Δ qualifies.
inline double tv_modulus_inverse(const TwoPolicyContext& ctx, double bound) {
  if (tv_modulus(ctx, 1.0) <= bound) return 1.0;
  double delta = 1.0;
  for (int k = 0; k < 1100 && delta > 0.0; ++k) {
    delta *= 0.5;
    if (tv_modulus(ctx, delta) <= bound) return delta;
  }
  return 0.0;
}

struct MixTrace {
  int depth = 0;
  std::vector<int> coords;    // criteria still matched at this level
  double lambda = 0.0;
  double alpha_hat = 0.0;
  Eigen::VectorXd direction;  // supporting direction on `coords` (empty for one criterion)
  double offset = 0.0;        // h(direction) on the frozen submodel
  int dropped = -1;           // criterion made affine in the others
};

struct MixCertificate {
  double lambda = 1.0;
  PerformanceVector target;
  PerformanceVector achieved;
  double error = 0.0;
  std::vector<MixTrace> trace;
};

struct WeightedPolicy {
  double weight;
  DeterministicPolicy policy;
};

struct DistanceResult {
  double G = 0.0;                         // distance from the target to the performance set
  double lower = 0.0;                     // certified lower bound on the distance
  std::vector<WeightedPolicy> witness;    // mixture whose vector is the near-projection
  Eigen::VectorXd direction;              // unit (target - projection), or zero when inside
  PerformanceVector projection;
};

struct DerandomizeOptions {
  double tol = 1e-6;            // Euclidean error budget of the returned policy
  int max_hull_iterations = 400;
  double alpha_resolution = 1e-12;
};

namespace detail {

using PolicyAtom = HullAtom<DeterministicPolicy>;

inline std::string short_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

inline Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<int>& coords) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(coords.size()));
  for (std::size_t k = 0; k < coords.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[coords[k]];
  return out;
}

inline Eigen::VectorXd embed(const Eigen::VectorXd& d, const std::vector<int>& coords, int n) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
  for (std::size_t k = 0; k < coords.size(); ++k) out[coords[k]] = d[static_cast<Eigen::Index>(k)];
  return out;
}

class Mixer {
 public:
  Mixer(const AtomlessMDP& m, const AbsorptionCertificate& cert, DerandomizeOptions opt, std::vector<MixTrace>* trace)
      : m_(m), cert_(cert), opt_(opt), trace_(trace) {
    scale_ = 1.0 + cert.L * m.reward_bound();
    all_.resize(static_cast<std::size_t>(m.criteria()));
    std::iota(all_.begin(), all_.end(), 0);
  }

  const std::vector<int>& all_coords() const { return all_; }
  // Below this a level cannot do better than the separation threshold of the α search allows.
  double level_floor() const { return 2e-9 * scale_; }
  double scale() const { return scale_; }

  PerformanceVector value(const DeterministicPolicy& phi) const { return exact_performance(m_, phi); }

  PolicyAtom atom(const DeterministicPolicy& phi, const std::vector<int>& coords, const Eigen::VectorXd& target, double w) const {
    return PolicyAtom{take(value(phi), coords) - target, phi, w};
  }

  // Wolfe's method on the performance set of `sub`, restricted to `coords`, shifted by -target.
  MinNormResult<DeterministicPolicy> nearest(const SubmodelSpec& sub, const std::vector<int>& coords,
                                             const Eigen::VectorXd& target, std::vector<PolicyAtom> start,
                                             MinNormOptions o) const {
    auto lmo = [&](const Eigen::VectorXd& x) {
      const double nx = x.norm();
      Eigen::VectorXd b = embed(nx > 0.0 ? Eigen::VectorXd(-x / nx) : Eigen::VectorXd(-x), coords, m_.criteria());
      ScalarSolution s = value_iteration(m_, sub, b);
      return std::pair<Eigen::VectorXd, DeterministicPolicy>{take(value(s.policy), coords) - target, s.policy};
    };
    if (start.empty()) {
      auto [s, p] = lmo(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(coords.size()), -1.0));
      start.push_back(PolicyAtom{s, p, 1.0});
    }
    o.max_iterations = std::min(o.max_iterations, opt_.max_hull_iterations);
    return min_norm_point<DeterministicPolicy>(lmo, std::move(start), o);
  }

  // Mixture of deterministic policies of `sub` matching `target` on `coords` within tol.
  std::vector<WeightedPolicy> decompose(const SubmodelSpec& sub, const std::vector<int>& coords, const Eigen::VectorXd& target,
                                        double tol, std::vector<PolicyAtom> start) const {
    MinNormOptions o;
    o.inside_tol = tol;
    o.gap_tol = 0.0;
    auto res = nearest(sub, coords, target, std::move(start), o);
    if (res.upper > tol) {
      throw CertifiedFailure("target is not attainable within tolerance in the submodel (distance " + short_number(res.upper) +
                                 ", lower bound " + short_number(res.lower) + ")",
                             res.upper);
    }
    std::vector<WeightedPolicy> out;
    for (auto& a : res.atoms) out.push_back(WeightedPolicy{a.weight, a.payload});
    std::sort(out.begin(), out.end(), [](const WeightedPolicy& a, const WeightedPolicy& b) { return a.weight > b.weight; });
    return out;
  }

  // Deterministic policy of `sub` whose vector matches `target` on `coords`.
  DeterministicPolicy realize(const SubmodelSpec& sub, const std::vector<int>& coords, const Eigen::VectorXd& target,
                              double tol, int depth, std::vector<PolicyAtom> start = {}) const {
    auto terms = decompose(sub, coords, target, tol / 2, std::move(start));
    DeterministicPolicy acc = terms.front().policy;
    double W = terms.front().weight;
    const double stage_tol = tol / (2.0 * static_cast<double>(terms.size()));
    for (std::size_t j = 1; j < terms.size(); ++j) {
      acc = mix(sub, coords, acc, terms[j].policy, W / (W + terms[j].weight), stage_tol, depth);
      W += terms[j].weight;
    }
    return acc;
  }

  struct AlphaSearch {
    double lo = 0.0;
    double hi = 1.0;
    std::vector<PolicyAtom> lo_atoms;  // witness of G(lo) <= gtol (points relative to the target)
    bool reaches_one = false;          // G(1) <= gtol
  };

  // The atoms' policies moved into A^α (φ1 forced below the threshold) and re-evaluated.
  std::vector<PolicyAtom> project_atoms(const TwoPolicyContext& ctx, const std::vector<PolicyAtom>& atoms, double alpha,
                                        const std::vector<int>& coords, const Eigen::VectorXd& target) const {
    const double b = path_threshold(ctx, alpha);
    std::vector<PolicyAtom> out;
    for (const auto& a : atoms) out.push_back(atom(splice_below(ctx.phi1, a.payload, b, m_.grid()), coords, target, a.weight));
    return out;
  }

  MinNormResult<DeterministicPolicy> G(const TwoPolicyContext& ctx, double alpha, const std::vector<int>& coords,
                                       const Eigen::VectorXd& target, const std::vector<PolicyAtom>& warm, MinNormOptions o) const {
    return nearest(alpha_submodel(ctx, alpha), coords, target, project_atoms(ctx, warm, alpha, coords, target), o);
  }

  // Bisection for α̂ = max{α : G(α) <= gtol}, G nondecreasing.
  AlphaSearch alpha_search(const TwoPolicyContext& ctx, const std::vector<int>& coords, const Eigen::VectorXd& target,
                           std::vector<PolicyAtom> start, double gtol) const {
    MinNormOptions decide;
    decide.inside_tol = gtol;
    decide.outside_tol = gtol;
    decide.gap_tol = 0.0;
    AlphaSearch s;
    auto r0 = nearest(alpha_submodel(ctx, 0.0), coords, target, std::move(start), decide);
    if (r0.upper > gtol) {
      throw CertifiedFailure("target is not in the performance set of the two-policy submodel", r0.upper);
    }
    s.lo_atoms = r0.atoms;
    auto r1 = G(ctx, 1.0, coords, target, s.lo_atoms, decide);
    if (r1.upper <= gtol) {
      s.lo = s.hi = 1.0;
      s.lo_atoms = r1.atoms;
      s.reaches_one = true;
      return s;
    }
    const double floor = std::max(opt_.alpha_resolution, tv_modulus_inverse(ctx, 1e-3 * gtol / std::max(1.0, m_.reward_bound())));
    while (s.hi - s.lo > floor) {
      const double mid = 0.5 * (s.lo + s.hi);
      auto r = G(ctx, mid, coords, target, s.lo_atoms, decide);
      if (r.upper <= gtol) {
        s.lo = mid;
        s.lo_atoms = r.atoms;
      } else {
        s.hi = mid;
      }
    }
    return s;
  }

  DeterministicPolicy mix(const SubmodelSpec& sub, const std::vector<int>& coords, const DeterministicPolicy& phi0,
                          const DeterministicPolicy& phi1, double lambda, double tol, int depth) const {
    const Eigen::VectorXd v0 = take(value(phi0), coords);
    const Eigen::VectorXd v1 = take(value(phi1), coords);
    if (lambda >= 1.0) return phi0;
    if (lambda <= 0.0) return phi1;
    if ((v0 - v1).norm() <= tol) return phi0;
    const Eigen::VectorXd target = lambda * v0 + (1.0 - lambda) * v1;
    TwoPolicyContext ctx = make_context(m_, cert_, phi0, phi1);
    MixTrace tr;
    tr.depth = depth;
    tr.coords = coords;
    tr.lambda = lambda;

    if (coords.size() == 1) {
      // ζ(α) = v^{φ_α} is continuous with ζ(0) = v0 and ζ(1) = v1: bisect for the target.
      auto f = [&](double a) { return take(value(path_policy(ctx, a)), coords)[0] - target[0]; };
      double lo = 0.0, hi = 1.0, flo = v0[0] - target[0];
      double best_alpha = 0.0, best = std::abs(flo);
      for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double fm = f(mid);
        if (std::abs(fm) < best) {
          best = std::abs(fm);
          best_alpha = mid;
        }
        if (best <= tol / 2) break;
        if ((fm > 0.0) == (flo > 0.0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      tr.alpha_hat = best_alpha;
      if (trace_) trace_->push_back(tr);
      return path_policy(ctx, best_alpha);
    }

    tol = std::max(tol, level_floor());
    const double gtol = std::max(1e-10 * scale_, 1e-2 * tol);
    std::vector<PolicyAtom> start{atom(phi0, coords, target, lambda), atom(phi1, coords, target, 1.0 - lambda)};
    AlphaSearch s = alpha_search(ctx, coords, target, std::move(start), gtol);
    tr.alpha_hat = s.hi;
    if (s.reaches_one) {
      if (trace_) trace_->push_back(tr);
      return phi1;
    }

    // At α_hi the target lies just outside the frozen set; the separating direction of the
    // min-norm point is a supporting direction there, exact for its own face.
    MinNormOptions full;
    full.gap_tol = 1e-15 * scale_;
    const SubmodelSpec sub_hi = alpha_submodel(ctx, s.hi);
    auto rh = G(ctx, s.hi, coords, target, s.lo_atoms, full);
    Eigen::VectorXd d = rh.upper > 0.0 ? Eigen::VectorXd(-rh.x / rh.upper) : Eigen::VectorXd::Unit(static_cast<Eigen::Index>(coords.size()), 0);
    ScalarSolution sol = value_iteration(m_, sub_hi, embed(d, coords, m_.criteria()));
    const Eigen::VectorXd bfull = embed(d, coords, m_.criteria());
    // The slab ⟨d, v⟩ >= h - L η of the conserving submodel must stay well inside the error budget.
    const double eta = std::min(default_conserving_tolerance(m_, bfull), std::max(1e-12 * scale_, 0.1 * tol / scale_));
    SubmodelSpec C = conserving_submodel(m_, sub_hi, sol, eta);
    // Witness policies on the face can carry Q-gaps above η on rarely visited states; keep them.
    for (const auto& a : rh.atoms) C = with_policy(C, a.payload, m_.grid());
    Eigen::Index i = 0;
    d.cwiseAbs().maxCoeff(&i);
    std::vector<int> rest;
    Eigen::VectorXd rest_target(static_cast<Eigen::Index>(coords.size()) - 1);
    for (std::size_t k = 0; k < coords.size(); ++k) {
      if (static_cast<Eigen::Index>(k) == i) continue;
      rest_target[static_cast<Eigen::Index>(rest.size())] = target[static_cast<Eigen::Index>(k)];
      rest.push_back(coords[k]);
    }
    tr.direction = d;
    tr.offset = d.dot(take(value(sol.policy), coords));
    tr.dropped = coords[static_cast<std::size_t>(i)];
    if (trace_) trace_->push_back(tr);

    const double next_tol = std::max(tol / 2.0, level_floor());
    std::vector<PolicyAtom> seed{atom(sol.policy, rest, rest_target, 1.0)};
    return realize(C, rest, rest_target, next_tol, depth + 1, std::move(seed));
  }

 private:
  const AtomlessMDP& m_;
  const AbsorptionCertificate& cert_;
  DerandomizeOptions opt_;
  std::vector<MixTrace>* trace_;
  double scale_ = 1.0;
  std::vector<int> all_;
};

}  // namespace detail

// Distance from v̂ to the performance set of `sub`, with a witness mixture and the separating direction.
inline DistanceResult distance_to_performance_set(const AtomlessMDP& m, const SubmodelSpec& sub, const PerformanceVector& target,
                                                  double tol = 1e-10) {
  validate(sub, m);
  if (target.size() != m.criteria()) throw DomainError("target has the wrong number of coordinates");
  auto cert = absorption_certificate(m);
  detail::Mixer mixer(m, cert, {}, nullptr);
  MinNormOptions o;
  o.gap_tol = tol;
  o.inside_tol = tol;
  auto res = mixer.nearest(sub, mixer.all_coords(), target, {}, o);
  DistanceResult out;
  out.G = res.upper;
  out.lower = res.lower;
  out.projection = target + res.x;
  for (auto& a : res.atoms) out.witness.push_back(WeightedPolicy{a.weight, a.payload});
  out.direction = res.upper > 0.0 ? Eigen::VectorXd(-res.x / res.upper) : Eigen::VectorXd::Zero(m.criteria());
  return out;
}

// α̂ = max{α : d(v̂, V(α)) <= tol} by bisection on the nondecreasing G.
inline double alpha_hat(const TwoPolicyContext& ctx, const PerformanceVector& target, double tol = 1e-10) {
  const AtomlessMDP& m = *ctx.model;
  detail::Mixer mixer(m, ctx.cert, {}, nullptr);
  const auto& coords = mixer.all_coords();
  return mixer.alpha_search(ctx, coords, target, {}, tol).lo;
}

// d(v̂, V(α)), the distance from the target to the performance set of A^α.
inline double alpha_distance(const TwoPolicyContext& ctx, const PerformanceVector& target, double alpha, double tol = 1e-12) {
  return distance_to_performance_set(*ctx.model, alpha_submodel(ctx, alpha), target, tol).G;
}

struct MixResult {
  DeterministicPolicy policy;
  MixCertificate certificate;
};

// Deterministic φ with v^φ = λ v^{φ0} + (1 - λ) v^{φ1} within opt.tol (Euclidean).
inline MixResult mix_pair(const AtomlessMDP& m, const DeterministicPolicy& phi0, const DeterministicPolicy& phi1, double lambda,
                          DerandomizeOptions opt = {}) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("mix_pair: λ = " + std::to_string(lambda) + " outside [0,1]");
  validate(phi0, m);
  validate(phi1, m);
  auto cert = absorption_certificate(m);
  MixResult out;
  detail::Mixer mixer(m, cert, opt, &out.certificate.trace);
  const PerformanceVector v0 = exact_performance(m, phi0), v1 = exact_performance(m, phi1);
  out.certificate.lambda = lambda;
  out.certificate.target = lambda * v0 + (1.0 - lambda) * v1;
  if (lambda == 1.0) {
    out.policy = phi0;
  } else if (lambda == 0.0) {
    out.policy = phi1;
  } else {
    out.policy = mixer.mix(full_submodel(m), mixer.all_coords(), phi0, phi1, lambda, opt.tol, 0);
  }
  out.certificate.achieved = exact_performance(m, out.policy);
  out.certificate.error = (out.certificate.achieved - out.certificate.target).norm();
  if (out.certificate.error > opt.tol) throw CertifiedFailure("mix_pair missed the target", out.certificate.error);
  return out;
}

// Deterministic φ with v^φ = target within opt.tol. Throws InfeasibleError when the target is
// certified to lie outside the performance set by more than opt.tol, and marks it undecidable
// when the distance cannot be resolved either way.
inline MixResult realize(const AtomlessMDP& m, const PerformanceVector& target, DerandomizeOptions opt = {}) {
  if (target.size() != m.criteria()) throw DomainError("target has the wrong number of coordinates");
  auto cert = absorption_certificate(m);
  MixResult out;
  out.certificate.target = target;
  detail::Mixer mixer(m, cert, opt, &out.certificate.trace);
  MinNormOptions o;
  o.inside_tol = opt.tol / 2;
  o.gap_tol = 0.0;
  auto res = mixer.nearest(full_submodel(m), mixer.all_coords(), target, {}, o);
  if (res.upper > opt.tol / 2) {
    if (res.lower > opt.tol) throw InfeasibleError("target lies outside the performance set", false);
    throw InfeasibleError("target is within the resolution gap of the performance set boundary", true);
  }
  std::vector<WeightedPolicy> terms;
  for (auto& a : res.atoms) terms.push_back(WeightedPolicy{a.weight, a.payload});
  std::sort(terms.begin(), terms.end(), [](const WeightedPolicy& a, const WeightedPolicy& b) { return a.weight > b.weight; });
  const double stage_tol = opt.tol / (2.0 * static_cast<double>(terms.size()));
  DeterministicPolicy acc = terms.front().policy;
  double W = terms.front().weight;
  for (std::size_t j = 1; j < terms.size(); ++j) {
    acc = mixer.mix(full_submodel(m), mixer.all_coords(), acc, terms[j].policy, W / (W + terms[j].weight), stage_tol, 0);
    W += terms[j].weight;
  }
  out.policy = acc;
  out.certificate.achieved = exact_performance(m, out.policy);
  out.certificate.error = (out.certificate.achieved - target).norm();
  if (out.certificate.error > opt.tol) throw CertifiedFailure("realize missed the target", out.certificate.error);
  return out;
}

inline bool is_deterministic(const StationaryPolicy& pi) {
  for (const auto& row : pi.probs)
    for (double p : row)
      if (p != 0.0 && p != 1.0) return false;
  return true;
}

inline DeterministicPolicy to_deterministic(const StationaryPolicy& pi) {
  DeterministicPolicy phi{pi.partition, {}};
  for (const auto& row : pi.probs) phi.actions.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
  return phi;
}

// At most N + 1 deterministic policies whose mixed vector is v^π within tol.
inline std::vector<WeightedPolicy> caratheodory(const AtomlessMDP& m, const StationaryPolicy& pi, double tol = 1e-9) {
  validate(pi, m);
  if (is_deterministic(pi)) return {WeightedPolicy{1.0, canonical(to_deterministic(pi), m.grid())}};
  auto cert = absorption_certificate(m);
  detail::Mixer mixer(m, cert, {}, nullptr);
  const PerformanceVector target = exact_performance(m, pi);
  std::vector<detail::PolicyAtom> start{mixer.atom(canonical(to_deterministic(pi), m.grid()), mixer.all_coords(), target, 1.0)};
  return mixer.decompose(full_submodel(m), mixer.all_coords(), target, tol, std::move(start));
}

// Deterministic φ with v^φ = v^π within opt.tol.
inline MixResult derandomize(const AtomlessMDP& m, const StationaryPolicy& pi, DerandomizeOptions opt = {}) {
  validate(pi, m);
  auto cert = absorption_certificate(m);
  MixResult out;
  out.certificate.target = exact_performance(m, pi);
  if (is_deterministic(pi)) {
    out.policy = canonical(to_deterministic(pi), m.grid());
  } else {
    detail::Mixer mixer(m, cert, opt, &out.certificate.trace);
    auto terms = caratheodory(m, pi, opt.tol / 2);
    const double stage_tol = opt.tol / (2.0 * static_cast<double>(terms.size()));
    DeterministicPolicy acc = terms.front().policy;
    double W = terms.front().weight;
    for (std::size_t j = 1; j < terms.size(); ++j) {
      acc = mixer.mix(full_submodel(m), mixer.all_coords(), acc, terms[j].policy, W / (W + terms[j].weight), stage_tol, 0);
      W += terms[j].weight;
    }
    out.policy = acc;
  }
  out.certificate.achieved = exact_performance(m, out.policy);
  out.certificate.error = (out.certificate.achieved - out.certificate.target).norm();
  if (out.certificate.error > opt.tol) throw CertifiedFailure("derandomize missed the target", out.certificate.error);
  return out;
}

}  // namespace detpol
