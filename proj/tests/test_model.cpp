#include <gtest/gtest.h>

#include <cmath>

#include "detpol/builtin.hpp"
#include "detpol/model.hpp"
#include "detpol/model_io.hpp"
#include "detpol/occupancy.hpp"

using namespace detpol;

namespace {

const char* kAbsorbNow = R"({
  "kind": "absorbing", "grid": [0, 1], "actions": 1, "available": [[0]],
  "kernel": [[{"to": [], "absorb": 1}]], "rewards": [[[1]]], "initial": [[0, 1, 1]]
})";

// One cell, one action, stays with probability `stay`, reward (r).
AtomlessMDP one_cell(double stay, double r, ModelKind kind = ModelKind::absorbing, double beta = 0.0) {
  AtomlessMDP::Spec s;
  s.actions = 1;
  s.available = {{0}};
  s.kernel = {{KernelRow{PieceMeasure::uniform(stay), 1.0 - stay}}};
  s.rewards = {{{r}}};
  s.kind = kind;
  s.beta = beta;
  return AtomlessMDP(std::move(s));
}

}  // namespace

TEST(Load, AbsorbImmediately) {
  AtomlessMDP m = parse_model(kAbsorbNow);
  EXPECT_EQ(m.cells(), 1u);
  EXPECT_EQ(m.kernel(0, 0).absorb, 1.0);
  EXPECT_EQ(m.kernel(0, 0).dest.total(), 0.0);
}

TEST(Load, RowSumError) {
  std::string doc = R"({
    "kind": "absorbing", "grid": [0, 1], "actions": 1, "available": [[0]],
    "kernel": [[{"to": [[0, 1, 0.5]], "absorb": 0.4}]], "rewards": [[[1]]], "initial": [[0, 1, 1]]
  })";
  try {
    parse_model(doc);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.path(), "kernel[0][0]");
  }
}

TEST(Load, ErrorsNameTheField) {
  auto path_of = [](const std::string& doc) {
    try {
      parse_model(doc);
    } catch (const ValidationError& e) {
      return e.path();
    }
    return std::string("<none>");
  };
  EXPECT_EQ(path_of(R"({"kind": "absorbing"})"), "grid");
  EXPECT_EQ(path_of(R"({"kind": "absorbing", "grid": [0, 1], "actions": 1, "available": [[]],
    "kernel": [[{"to": [], "absorb": 1}]], "rewards": [[[1]]], "initial": [[0, 1, 1]]})"),
            "available[0]");
  EXPECT_EQ(path_of(R"({"kind": "absorbing", "grid": [0, 1], "actions": 1, "available": [[0]],
    "kernel": [[{"to": [[0, 1, -0.5]], "absorb": 1.5}]], "rewards": [[[1]]], "initial": [[0, 1, 1]]})"),
            "kernel[0][0].to[0][2]");
  EXPECT_EQ(path_of(R"({"kind": "absorbing", "grid": [0, 1], "actions": 1, "available": [[0]],
    "kernel": [[{"to": [], "absorb": 1}]], "rewards": [[[1]]], "initial": [[0, 1, 0.5]]})"),
            "initial");
  EXPECT_EQ(path_of(R"({"kind": "discounted", "beta": 1.0, "grid": [0, 1], "actions": 1, "available": [[0]],
    "kernel": [[{"to": [], "absorb": 1}]], "rewards": [[[1]]], "initial": [[0, 1, 1]]})"),
            "beta");
  EXPECT_EQ(path_of("{not json"), "");
}

TEST(Load, RoundTrip) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    AtomlessMDP m = random_model(seed, {.cells = 5, .actions = 3, .criteria = 2, .fine_destinations = true});
    Json doc = model_to_json(m);
    AtomlessMDP again = model_from_json(Json::parse(doc.dump()));
    EXPECT_EQ(model_to_json(again), doc);
    EXPECT_EQ(again.measure_grid(), m.measure_grid());
  }
  AtomlessMDP e = example_3_12(3);
  EXPECT_EQ(model_to_json(model_from_json(model_to_json(e))), model_to_json(e));
}

TEST(PolicyText, RoundTrip) {
  Uniform01 u(3);
  AtomlessMDP m = random_model(3);
  DeterministicPolicy phi = random_deterministic_policy(m, u, 3);
  auto back = parse_policy(format_policy(phi));
  ASSERT_TRUE(std::holds_alternative<DeterministicPolicy>(back));
  EXPECT_EQ(std::get<DeterministicPolicy>(back), phi);
  StationaryPolicy pi = random_stationary_policy(m, u, 2);
  auto back2 = parse_policy(format_policy(pi));
  ASSERT_TRUE(std::holds_alternative<StationaryPolicy>(back2));
  EXPECT_EQ(std::get<StationaryPolicy>(back2), pi);
}

TEST(PolicyText, Errors) {
  EXPECT_THROW(parse_policy("0 0.5 1\n0.6 1 0\n"), ValidationError);
  EXPECT_THROW(parse_policy("0 0.5 1\n0.5 0.9 0\n"), ValidationError);
  EXPECT_THROW(parse_policy("0 1 x\n"), ValidationError);
  EXPECT_THROW(parse_policy(""), ValidationError);
  auto p = parse_policy("# policy stationary\n0 1 1\n");
  EXPECT_TRUE(std::holds_alternative<StationaryPolicy>(p));
}

TEST(Policy, Validation) {
  AtomlessMDP m = unit_interval_onestep();
  EXPECT_NO_THROW(validate(DeterministicPolicy{StatePartition({0, 0.5, 1}), {0, 1}}, m));
  EXPECT_THROW(validate(DeterministicPolicy{StatePartition(), {2}}, m), ValidationError);
  AtomlessMDP r = random_model(4);
  EXPECT_THROW(validate(DeterministicPolicy{StatePartition(), {0}}, r), PartitionMismatch);
  EXPECT_THROW(validate(StationaryPolicy{StatePartition(), {{0.5, 0.6}}}, m), ValidationError);
}

TEST(Policy, CanonicalMergesButKeepsGrid) {
  StatePartition grid({0, 0.5, 1});
  DeterministicPolicy p{StatePartition({0, 0.2, 0.5, 0.7, 1}), {1, 1, 1, 0}};
  DeterministicPolicy c = canonical(p, grid);
  EXPECT_EQ(c.partition.breakpoints(), (std::vector<double>{0, 0.5, 0.7, 1}));
  EXPECT_EQ(c.actions, (std::vector<int>{1, 1, 0}));
}

TEST(Transform, DiscountZeroAbsorbsEverything) {
  AtomlessMDP m = random_model(5);
  AtomlessMDP::Spec s = m.spec();
  s.kind = ModelKind::discounted;
  s.beta = 0.0;
  AtomlessMDP t = discounted_to_absorbing(AtomlessMDP(s));
  for (std::size_t c = 0; c < t.cells(); ++c)
    for (int a = 0; a < t.actions(); ++a)
      if (t.available(c, a)) {
        EXPECT_DOUBLE_EQ(t.kernel(c, a).absorb, 1.0);
        EXPECT_EQ(t.kernel(c, a).dest.total(), 0.0);
      }
}

TEST(Transform, DiscountHalfGivesLifetimeTwo) {
  AtomlessMDP t = discounted_to_absorbing(one_cell(1.0, 1.0, ModelKind::discounted, 0.5));
  auto cert = absorption_certificate(t);
  EXPECT_NEAR(cert.L, 2.0, 1e-12);
  for (std::size_t n = 0; n < 20; ++n) EXPECT_NEAR(cert.survival[n], std::pow(0.5, n), 1e-15);
  EXPECT_NEAR(expected_lifetime(t, to_stationary(constant_policy(t, 0), 1)), 2.0, 1e-12);
}

TEST(Transform, DiscountedEqualsDirectSummation) {
  // Oracle: Σ_t β^t E r(x_t, a_t) by iterating the undiscounted marginal.
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    AtomlessMDP base = random_model(seed, {.cells = 6, .actions = 2, .criteria = 2, .absorb_lo = 0.0, .absorb_hi = 0.0});
    AtomlessMDP::Spec s = base.spec();
    s.kind = ModelKind::discounted;
    s.beta = 0.8;
    AtomlessMDP disc(s);
    Uniform01 u(seed);
    DeterministicPolicy phi = random_deterministic_policy(base, u, 2);
    StationaryPolicy pi = to_stationary(phi, base.actions());
    PieceMeasure q = base.initial();
    Eigen::VectorXd v = Eigen::VectorXd::Zero(2);
    double discount = 1.0;
    auto cells = parent_intervals(refine(base.measure_grid(), phi.partition), base.grid());
    for (int t = 0; discount * base.reward_bound() > 1e-14; ++t) {
      StatePartition common = refine(refine(base.measure_grid(), phi.partition), q.partition());
      PieceMeasure qc = q.on(common);
      auto cell = parent_intervals(common, base.grid());
      auto pol = parent_intervals(common, phi.partition);
      for (std::size_t k = 0; k < common.size(); ++k) {
        const auto& r = base.reward(cell[k], phi.actions[pol[k]]);
        for (int n = 0; n < 2; ++n) v[n] += discount * qc.mass(k) * r[static_cast<std::size_t>(n)];
      }
      q = marginal_step(base, pi, q);
      discount *= 0.8;
    }
    (void)cells;
    AtomlessMDP t = discounted_to_absorbing(disc);
    EXPECT_LT((exact_performance(t, phi) - v).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((performance(t, phi) - v).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((exact_performance(disc, phi) - v).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Transform, DiscountRequiresDiscountedInput) {
  EXPECT_THROW(discounted_to_absorbing(random_model(1)), ValidationError);
}

TEST(Transform, UnitWeightIsIdentity) {
  AtomlessMDP m = random_model(6);
  AtomlessMDP w = weighted_transform(m, std::vector<double>(m.cells(), 1.0));
  Uniform01 u(6);
  for (int k = 0; k < 5; ++k) {
    DeterministicPolicy phi = random_deterministic_policy(m, u, 1);
    EXPECT_LT((exact_performance(w, phi) - exact_performance(m, phi)).cwiseAbs().maxCoeff(), 1e-13);
  }
  for (std::size_t c = 0; c < m.cells(); ++c)
    for (int a = 0; a < m.actions(); ++a)
      if (m.available(c, a)) EXPECT_EQ(w.reward(c, a), m.reward(c, a));
}

TEST(Transform, ConstantWeightCancels) {
  AtomlessMDP m = one_cell(0.0, 3.0);
  AtomlessMDP w = weighted_transform(m, {2.0});
  EXPECT_DOUBLE_EQ(w.reward(0, 0)[0], 3.0);
  EXPECT_EQ(w.initial(), m.initial());
  EXPECT_DOUBLE_EQ(exact_performance(w, constant_policy(w, 0))[0], 3.0);
}

TEST(Transform, WeightConditionViolation) {
  // Two cells, the first sends everything to the second which has a larger weight.
  AtomlessMDP::Spec s;
  s.grid = StatePartition({0, 0.5, 1});
  s.actions = 1;
  s.available = {{0}, {0}};
  s.kernel = {{KernelRow{PieceMeasure(StatePartition({0, 0.5, 1}), {0, 0.9}), 0.1}}, {KernelRow{PieceMeasure(), 1.0}}};
  s.rewards = {{{1.0}}, {{1.0}}};
  AtomlessMDP m(s);
  try {
    weighted_transform(m, {1.0, 2.0});
    FAIL();
  } catch (const CertificateFailure& e) {
    EXPECT_EQ(e.cell(), 0);
    EXPECT_EQ(e.action(), 0);
  }
}

TEST(Transform, WeightedPreservesPerformance) {
  // 8 cells, weights in [1, 2], absorption at least 1/2 so (1/w) ∫ w dp <= 2 * 0.5 = 1.
  AtomlessMDP m = random_model(8, {.cells = 8, .actions = 3, .criteria = 2, .absorb_lo = 0.5, .absorb_hi = 0.7});
  Uniform01 u(8);
  std::vector<double> w(m.cells());
  for (double& x : w) x = u(1.0, 2.0);
  AtomlessMDP t = weighted_transform(m, w);
  for (int k = 0; k < 20; ++k) {
    DeterministicPolicy phi = random_deterministic_policy(m, u, 2);
    EXPECT_LT((performance(t, phi) - performance(m, phi)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Certificate, AbsorbImmediately) {
  AtomlessMDP m = parse_model(kAbsorbNow);
  auto cert = absorption_certificate(m);
  EXPECT_DOUBLE_EQ(cert.L, 1.0);
  for (std::size_t n = 1; n < 10; ++n) EXPECT_EQ(cert.tail(n), 0.0);
}

TEST(Certificate, DiscountedLifetimeIsExact) {
  for (double beta : {0.0, 0.5, 0.9}) {
    AtomlessMDP t = discounted_to_absorbing(one_cell(1.0, 1.0, ModelKind::discounted, beta));
    EXPECT_NEAR(absorption_certificate(t).L, 1.0 / (1.0 - beta), 1e-12) << beta;
  }
}

TEST(Certificate, NotUniformlyAbsorbingIsReported) {
  // Stays forever with probability one: absorbing fails and the iteration diverges.
  EXPECT_THROW(absorption_certificate(one_cell(1.0, 0.0), {.tol = 1e-13, .max_iterations = 2000}), NotCertifiedError);
}

TEST(Certificate, TailIsNonincreasingAndBoundsLifetime) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    AtomlessMDP m = random_model(seed);
    auto cert = absorption_certificate(m);
    EXPECT_TRUE(std::isfinite(cert.L));
    for (std::size_t n = 1; n < 200; ++n) EXPECT_LE(cert.tail(n), cert.tail(n - 1));
    EXPECT_LT(cert.tail(2000), 1e-12);
    Uniform01 u(seed);
    for (int k = 0; k < 5; ++k) {
      auto pi = random_stationary_policy(m, u, 1);
      EXPECT_LE(expected_lifetime(m, pi), cert.L + 1e-12);
    }
  }
}

TEST(CountableTruncation, ClosedForms) {
  AtomlessMDP m = example_3_12(10);
  EXPECT_FALSE(m.note().empty());
  EXPECT_NEAR(exact_performance(m, example_3_12_policy(m, 11))[0], 2.0, 1e-12);
  for (int n = 0; n <= 10; ++n) {
    EXPECT_NEAR(exact_performance(m, example_3_12_policy(m, n))[0], 3.0 - std::pow(2.0, 1 - n), 1e-12) << n;
  }
  EXPECT_NEAR(exact_performance(m, example_3_12_policy(m, 2))[0], 2.5, 1e-12);
}

TEST(CountableTruncation, TailPatternIsNotUniform) {
  // E^{φ^n} Σ_{t >= n} I{t < T} = 1 for every n <= n_max: the tail does not vanish uniformly.
  const int n_max = 10;
  AtomlessMDP m = example_3_12(n_max);
  auto cert = absorption_certificate(m);
  EXPECT_NEAR(cert.L, std::pow(2.0, n_max), 1e-9);
  for (int n = 1; n <= n_max; ++n) {
    StationaryPolicy pi = to_stationary(example_3_12_policy(m, n), 2);
    PieceMeasure q = m.initial();
    double first_n = 0.0;
    for (int t = 0; t < n; ++t) {
      first_n += q.total();
      q = marginal_step(m, pi, q);
    }
    double tail = expected_lifetime(m, pi) - first_n;
    EXPECT_NEAR(tail, 1.0, 1e-12) << n;
    EXPECT_LE(tail, cert.tail(static_cast<std::size_t>(n)) + 1e-12);
  }
}

TEST(Builtin, UnitIntervalEndpoints) {
  AtomlessMDP m = unit_interval_onestep();
  EXPECT_DOUBLE_EQ(exact_performance(m, constant_policy(m, 0))[0], 0.0);
  EXPECT_DOUBLE_EQ(exact_performance(m, constant_policy(m, 1))[0], 1.0);
  EXPECT_DOUBLE_EQ(exact_performance(m, DeterministicPolicy{StatePartition({0, 0.3, 1}), {0, 1}})[0], 0.7);
}
