#include <gtest/gtest.h>

#include <random>

#include "detpol/builtin.hpp"
#include "detpol/measure.hpp"

using namespace detpol;

namespace {

PieceMeasure random_measure(Uniform01& u, std::size_t cells) {
  StatePartition p = StatePartition::uniform(1);
  for (std::size_t k = 1; k < cells; ++k) p = with_breakpoint(p, u(0.001, 0.999));
  std::vector<double> w(p.size());
  for (double& x : w) x = u() < 0.3 ? 0.0 : u(0.0, 2.0);
  return PieceMeasure(p, w);
}

}  // namespace

TEST(Partition, RejectsBadBreakpoints) {
  EXPECT_THROW(StatePartition({0.0}), ValidationError);
  EXPECT_THROW(StatePartition({0.1, 1.0}), ValidationError);
  EXPECT_THROW(StatePartition({0.0, 0.9}), ValidationError);
  EXPECT_THROW(StatePartition({0.0, 0.5, 0.5, 1.0}), ValidationError);
}

TEST(Partition, RefineExamples) {
  EXPECT_EQ(refine(StatePartition(), StatePartition()).breakpoints(), (std::vector<double>{0, 1}));
  EXPECT_EQ(refine(StatePartition({0, 0.5, 1}), StatePartition({0, 0.25, 1})).breakpoints(),
            (std::vector<double>{0, 0.25, 0.5, 1}));
  EXPECT_EQ(refine(StatePartition({0, 1.0 / 3, 1}), StatePartition({0, 2.0 / 3, 1})).breakpoints(),
            (std::vector<double>{0, 1.0 / 3, 2.0 / 3, 1}));
}

TEST(Partition, RefineMergesNearbyBreakpoints) {
  StatePartition r = refine(StatePartition({0, 0.5, 1}), StatePartition({0, 0.5 + 1e-14, 1}));
  EXPECT_EQ(r.breakpoints(), (std::vector<double>{0, 0.5, 1}));
}

TEST(Partition, RefineIsCommonRefinement) {
  Uniform01 u(7);
  for (int trial = 0; trial < 50; ++trial) {
    StatePartition a = random_measure(u, 5).partition();
    StatePartition b = random_measure(u, 7).partition();
    StatePartition r = refine(a, b);
    EXPECT_TRUE(r.refines(a));
    EXPECT_TRUE(r.refines(b));
    EXPECT_LE(r.size(), a.size() + b.size() - 1);
  }
}

TEST(Partition, Locate) {
  StatePartition p({0, 0.25, 0.5, 1});
  EXPECT_EQ(p.locate(0.0), 0u);
  EXPECT_EQ(p.locate(0.25), 1u);
  EXPECT_EQ(p.locate(0.7), 2u);
  EXPECT_EQ(p.locate(1.0), 2u);
}

TEST(Measure, CdfExamples) {
  EXPECT_DOUBLE_EQ(cdf(PieceMeasure::uniform(), 0.5), 0.5);
  PieceMeasure m(StatePartition({0, 0.5, 1}), {2, 0});
  EXPECT_DOUBLE_EQ(cdf(m, 0.25), 1.0);
  EXPECT_EQ(cdf(m, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(cdf(m, 1.0), m.total());
  EXPECT_THROW(cdf(m, -0.1), DomainError);
  EXPECT_THROW(cdf(m, 1.5), DomainError);
}

TEST(Measure, RejectsNegativeMass) {
  EXPECT_THROW(PieceMeasure(StatePartition({0, 0.5, 1}), {1, -1}), ValidationError);
  EXPECT_THROW(PieceMeasure(StatePartition({0, 0.5, 1}), {1}), ValidationError);
}

TEST(Measure, AtomlessSingletons) {
  PieceMeasure m(StatePartition({0, 0.5, 1}), {2, 3});
  EXPECT_EQ(m.interval_mass(0.3, 0.3), 0.0);
  EXPECT_EQ(m.interval_mass(0.5, 0.5), 0.0);
}

TEST(Measure, QuantileExamples) {
  auto q = quantile(PieceMeasure::uniform(), 0.5);
  EXPECT_DOUBLE_EQ(q.b_min, 0.5);
  EXPECT_DOUBLE_EQ(q.b_max, 0.5);
  q = quantile(PieceMeasure(StatePartition({0, 0.25, 0.75, 1}), {1, 0, 1}), 0.5);
  EXPECT_DOUBLE_EQ(q.b_min, 0.25);
  EXPECT_DOUBLE_EQ(q.b_max, 0.75);
  q = quantile(PieceMeasure::uniform(), 1.0);
  EXPECT_EQ(q.b_min, 1.0);
  EXPECT_EQ(q.b_max, 1.0);
  q = quantile(PieceMeasure::uniform(), 0.0);
  EXPECT_EQ(q.b_min, 0.0);
  EXPECT_EQ(q.b_max, 0.0);
}

TEST(Measure, QuantileZeroMassPrefix) {
  auto q = quantile(PieceMeasure(StatePartition({0, 0.4, 1}), {0, 1}), 0.0);
  EXPECT_EQ(q.b_min, 0.0);
  EXPECT_DOUBLE_EQ(q.b_max, 0.4);
  q = quantile(PieceMeasure(StatePartition({0, 0.4, 1}), {1, 0}), 1.0);
  EXPECT_DOUBLE_EQ(q.b_min, 0.4);
  EXPECT_EQ(q.b_max, 1.0);
}

TEST(Measure, QuantileErrors) {
  EXPECT_THROW(quantile(PieceMeasure::zero(StatePartition()), 0.5), DegenerateMeasureError);
  EXPECT_THROW(quantile(PieceMeasure::uniform(), 1.5), DomainError);
}

TEST(Measure, TotalVariationExamples) {
  PieceMeasure m(StatePartition({0, 0.3, 1}), {0.2, 0.7});
  EXPECT_EQ(total_variation(m, m), 0.0);
  PieceMeasure left(StatePartition({0, 0.5, 1}), {1, 0});
  PieceMeasure right(StatePartition({0, 0.5, 1}), {0, 1});
  EXPECT_DOUBLE_EQ(total_variation(left, right), 2.0);
  EXPECT_DOUBLE_EQ(total_variation(PieceMeasure(StatePartition({0, 0.5, 1}), {1, 1}),
                                   PieceMeasure(StatePartition({0, 0.5, 1}), {2, 0})),
                   2.0);
}

TEST(Measure, SplitExamples) {
  PieceMeasure u = PieceMeasure::uniform();
  EXPECT_DOUBLE_EQ(mass_below(u, 0.3), 0.3);
  PieceMeasure s = split_at(u, 0.3);
  ASSERT_EQ(s.partition().size(), 2u);
  EXPECT_DOUBLE_EQ(s.mass(0), 0.3);
  EXPECT_DOUBLE_EQ(s.mass(1), 0.7);
  PieceMeasure m(StatePartition({0, 0.5, 1}), {0, 1});
  EXPECT_EQ(split_at(m, 0.5).partition(), m.partition());
  EXPECT_EQ(mass_below(m, 0.25), 0.0);
}

TEST(MeasureProperty, CdfMonotoneAndLipschitz) {
  Uniform01 u(11);
  for (int trial = 0; trial < 100; ++trial) {
    PieceMeasure m = random_measure(u, 6);
    double max_density = 0.0;
    for (std::size_t k = 0; k < m.partition().size(); ++k) max_density = std::max(max_density, m.density(k));
    double prev_b = 0.0, prev_f = 0.0;
    for (int s = 1; s <= 200; ++s) {
      double b = s / 200.0;
      double f = cdf(m, b);
      EXPECT_GE(f, prev_f - 1e-15);
      EXPECT_LE(f - prev_f, max_density * (b - prev_b) + 1e-12);
      prev_b = b;
      prev_f = f;
    }
  }
}

TEST(MeasureProperty, QuantileInvertsCdf) {
  Uniform01 u(12);
  for (int trial = 0; trial < 200; ++trial) {
    PieceMeasure m = random_measure(u, 6);
    if (m.total() == 0.0) continue;
    double alpha = u();
    auto q = quantile(m, alpha);
    EXPECT_LE(q.b_min, q.b_max);
    EXPECT_NEAR(cdf(m, q.b_min), alpha * m.total(), 1e-12);
    EXPECT_NEAR(cdf(m, q.b_max), alpha * m.total(), 1e-12);
    EXPECT_NEAR(m.interval_mass(q.b_min, q.b_max), 0.0, 1e-12);
    // Extremal: just outside the level set the cdf differs.
    if (q.b_min > 1e-9) EXPECT_LT(cdf(m, q.b_min - 1e-7), alpha * m.total());
    if (q.b_max < 1 - 1e-9) EXPECT_GT(cdf(m, q.b_max + 1e-7), alpha * m.total());
  }
}

TEST(MeasureProperty, SplitPreservesCdf) {
  Uniform01 u(13);
  for (int trial = 0; trial < 100; ++trial) {
    PieceMeasure m = random_measure(u, 5);
    double b = u();
    PieceMeasure s = split_at(m, b);
    EXPECT_NEAR(s.total(), m.total(), 1e-14);
    for (int k = 0; k <= 50; ++k) EXPECT_NEAR(cdf(s, k / 50.0), cdf(m, k / 50.0), 1e-14);
  }
}

TEST(MeasureProperty, TotalVariationMetric) {
  Uniform01 u(14);
  for (int trial = 0; trial < 100; ++trial) {
    PieceMeasure a = random_measure(u, 4), b = random_measure(u, 5), c = random_measure(u, 3);
    EXPECT_NEAR(total_variation(a, b), total_variation(b, a), 1e-14);
    EXPECT_LE(total_variation(a, c), total_variation(a, b) + total_variation(b, c) + 1e-12);
    EXPECT_NEAR(total_variation(a, split_at(a, u())), 0.0, 1e-14);
  }
}
