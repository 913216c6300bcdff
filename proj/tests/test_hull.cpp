#include <gtest/gtest.h>

#include <cmath>

#include "detpol/builtin.hpp"
#include "detpol/hull.hpp"

using namespace detpol;

namespace {

using Atom = HullAtom<int>;

// Oracle over an explicit point list.
struct ListLmo {
  std::vector<Eigen::VectorXd> pts;
  std::pair<Eigen::VectorXd, int> operator()(const Eigen::VectorXd& d) const {
    int best = 0;
    for (int k = 1; k < static_cast<int>(pts.size()); ++k)
      if (d.dot(pts[static_cast<std::size_t>(k)]) < d.dot(pts[static_cast<std::size_t>(best)])) best = k;
    return {pts[static_cast<std::size_t>(best)], best};
  }
};

Eigen::VectorXd v2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST(Hull, SegmentProjection) {
  ListLmo lmo{{v2(1, -1), v2(1, 1)}};
  auto r = min_norm_point<int>(lmo, {Atom{lmo.pts[0], 0, 1.0}}, {});
  EXPECT_NEAR(r.upper, 1.0, 1e-14);
  EXPECT_NEAR(r.x[0], 1.0, 1e-14);
  EXPECT_NEAR(r.x[1], 0.0, 1e-14);
  EXPECT_EQ(r.atoms.size(), 2u);
}

TEST(Hull, OriginInsideTriangle) {
  ListLmo lmo{{v2(1, 0), v2(-1, 1), v2(-1, -1)}};
  MinNormOptions o;
  o.inside_tol = 1e-12;
  auto r = min_norm_point<int>(lmo, {Atom{lmo.pts[0], 0, 1.0}}, o);
  EXPECT_EQ(r.status, HullStatus::inside);
  double s = 0.0;
  for (auto& a : r.atoms) s += a.weight;
  EXPECT_NEAR(s, 1.0, 1e-14);
}

TEST(Hull, OutsideDecisionStopsEarly) {
  ListLmo lmo{{v2(3, 0), v2(4, 1), v2(4, -1)}};
  MinNormOptions o;
  o.outside_tol = 1.0;
  auto r = min_norm_point<int>(lmo, {Atom{lmo.pts[1], 1, 1.0}}, o);
  EXPECT_EQ(r.status, HullStatus::outside);
  EXPECT_GT(r.lower, 1.0);
}

TEST(Hull, RandomPolytopesAgreeWithBounds) {
  Uniform01 u(42);
  for (int t = 0; t < 30; ++t) {
    ListLmo lmo;
    Eigen::VectorXd shift(3);
    shift << u(-1, 1), u(-1, 1), u(-1, 1);
    for (int k = 0; k < 12; ++k) {
      Eigen::VectorXd p(3);
      p << u(-1, 1), u(-1, 1), u(-1, 1);
      lmo.pts.push_back(p + shift);
    }
    auto r = min_norm_point<int>(lmo, {Atom{lmo.pts[0], 0, 1.0}}, {});
    EXPECT_LE(r.lower, r.upper + 1e-15);
    EXPECT_LE(r.upper - r.lower, 1e-12);
    EXPECT_LE(r.atoms.size(), 4u);
    // Optimality: no vertex improves in the direction of -x.
    for (auto& p : lmo.pts) EXPECT_GE(r.x.dot(p), r.x.squaredNorm() - 1e-12);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(3);
    for (auto& a : r.atoms) y += a.weight * lmo.pts[static_cast<std::size_t>(a.payload)];
    EXPECT_LE((y - r.x).norm(), 1e-12);
  }
}

TEST(Hull, CaratheodoryPruneKeepsCombination) {
  Uniform01 u(7);
  std::vector<Atom> atoms;
  for (int k = 0; k < 9; ++k) atoms.push_back(Atom{v2(u(), u()), k, 1.0 / 9});
  Eigen::VectorXd before = detail::combine(atoms);
  caratheodory_prune(atoms);
  EXPECT_LE(atoms.size(), 3u);
  EXPECT_LE((detail::combine(atoms) - before).norm(), 1e-13);
  for (auto& a : atoms) EXPECT_GE(a.weight, 0.0);
}
