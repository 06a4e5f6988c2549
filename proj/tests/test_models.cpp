#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hvsinglet/models.hpp"

namespace hv {
namespace {

constexpr Outcome P = Outcome::Plus;
constexpr Outcome M = Outcome::Minus;

LambdaPoint scalar_point(double g) { return LambdaPoint{{g}, {}, {}}; }

// Independent transcription of the canonical table formula.
double canonical_oracle(int sigma, int tau, double t, double c) { return (1.0 - sigma * tau * (t - c)) / 4.0; }

TEST(Outcome, FromInt) {
  EXPECT_EQ(outcome_from_int(1), P);
  EXPECT_EQ(outcome_from_int(-1), M);
  EXPECT_THROW(outcome_from_int(0), std::invalid_argument);
}

TEST(QmSinglet, Examples) {
  const UnitVector z = UnitVector::e_z();
  EXPECT_DOUBLE_EQ(qm_singlet_prob(P, P, z, z), 0.0);
  EXPECT_DOUBLE_EQ(qm_singlet_prob(P, M, z, z), 0.5);
  for (Outcome s : kOutcomes) {
    for (Outcome t : kOutcomes) EXPECT_DOUBLE_EQ(qm_singlet_prob(s, t, z, UnitVector::e_x()), 0.25);
  }
}

TEST(CanonicalTable, ZeroExcessIsSinglet) {
  for (double t : {-1.0, -0.3, 0.0, 0.7, 1.0}) EXPECT_EQ(canonical_table(t, 0.0), qm_singlet_table(t));
}

TEST(CanonicalTable, Family1Example) {
  const ProbabilityTable p = canonical_table(0.0, family1_c(0.4, UnitVector::e_z(), UnitVector::e_x()));
  EXPECT_NEAR(p(P, P), canonical_oracle(1, 1, 0.0, 0.4), 1e-15);
  EXPECT_NEAR(p(P, P), 0.35, 1e-15);
  EXPECT_NEAR(p(P, M), 0.15, 1e-15);
  EXPECT_NEAR(p(M, P), 0.15, 1e-15);
  EXPECT_NEAR(p(M, M), 0.35, 1e-15);
}

TEST(ProbabilityTable, Accessors) {
  const ProbabilityTable p({0.1, 0.2, 0.3, 0.4});
  EXPECT_DOUBLE_EQ(p.sum(), 1.0);
  EXPECT_DOUBLE_EQ(p.min_entry(), 0.1);
  EXPECT_DOUBLE_EQ(p.max_entry(), 0.4);
  EXPECT_DOUBLE_EQ(p.marginal_first(P), 0.3);
  EXPECT_DOUBLE_EQ(p.marginal_second(M), 0.6);
  EXPECT_DOUBLE_EQ(p.correlator(), 0.1 - 0.2 - 0.3 + 0.4);
}

TEST(Family1, Examples) {
  const UnitVector z = UnitVector::e_z();
  EXPECT_DOUBLE_EQ(family1_c(0.4, z, UnitVector::e_x()), 0.4);
  EXPECT_DOUBLE_EQ(family1_c(0.3, z, z), 0.0);
  EXPECT_DOUBLE_EQ(family1_c(0.3, z, -z), 0.0);
  const UnitVector b = at_cosine(z, UnitVector::e_x(), 0.5);
  EXPECT_NEAR(family1_c(-0.25, z, b), (1.0 - 0.25) * -0.25, 1e-15);
  EXPECT_NEAR(family1_c(-0.25, z, b), -0.1875, 1e-15);
}

TEST(Family1, CoincidentSettingsGiveSingletTable) {
  const HiddenVariableModel m = make_family1(ScalarMeasure::two_point(0.4));
  const UnitVector a(0.2, 0.4, -0.7);
  for (double g : {-0.4, 0.4}) {
    const ProbabilityTable same = canonical_prob(m, scalar_point(g), a, a);
    const ProbabilityTable opposite = canonical_prob(m, scalar_point(g), a, -a);
    for (Outcome s : kOutcomes) {
      for (Outcome t : kOutcomes) {
        EXPECT_NEAR(same(s, t), qm_singlet_prob(s, t, a, a), 1e-15);
        EXPECT_NEAR(opposite(s, t), qm_singlet_prob(s, t, a, -a), 1e-15);
      }
    }
  }
}

TEST(Family1, RejectsHalf) {
  EXPECT_THROW(make_family1(ScalarMeasure::two_point(0.5)), std::invalid_argument);
  EXPECT_NO_THROW(make_family1(ScalarMeasure::two_point(0.49)));
}

TEST(Family2, Examples) {
  const UnitVector a = UnitVector::e_z();
  const UnitVector b(1.0, 0.0, 1.0);
  // -(a.b) ((a.u)^2 - (b.u)^2)^2 g at u = a: -(1/sqrt2) (1 - 1/2)^2 0.5
  const double expected = -(1.0 / std::numbers::sqrt2) * 0.25 * 0.5;
  EXPECT_NEAR(family2_c(0.5, a, a, b), expected, 1e-16);
  EXPECT_NEAR(family2_c(0.5, a, a, b), -0.08838834764831843, 1e-16);
  EXPECT_DOUBLE_EQ(family2_c(0.3, UnitVector::e_y(), a, b), 0.0);  // a.u = b.u
  EXPECT_DOUBLE_EQ(family2_c(0.3, UnitVector(1.0, 2.0, 3.0), a, UnitVector::e_x()), 0.0);
}

TEST(Family2, EnvelopeBound) {
  // max over u of ((a.u)^2 - (b.u)^2)^2 is 1 - (a.b)^2
  RandomStream rng(17, 0);
  for (int k = 0; k < 5; ++k) {
    const UnitVector a = sample_uniform_sphere(rng);
    const UnitVector b = sample_uniform_sphere(rng);
    const double t = dot(a, b);
    double worst = 0.0;
    for (int i = 0; i < 100'000; ++i) {
      const UnitVector u = sample_uniform_sphere(rng);
      const double d = dot(a, u) * dot(a, u) - dot(b, u) * dot(b, u);
      worst = std::max(worst, d * d);
    }
    EXPECT_LE(worst, 1.0 - t * t + 1e-9);
  }
}

TEST(Family2, AcceptsHalf) { EXPECT_NO_THROW(make_family2(ScalarMeasure::two_point(0.5), 8, 16)); }

TEST(Wrongtrial, NegativeNearCoincidence) {
  const UnitVector a = UnitVector::e_z();
  const double eps = 1e-4;
  const UnitVector b = at_cosine(a, UnitVector::e_x(), 1.0 - eps);
  const double c = wrongtrial_c(-0.4, a, b);
  EXPECT_NEAR(c, -0.4 * std::sqrt(eps * (2.0 - eps)), 1e-12);
  const HiddenVariableModel m = make_wrongtrial(ScalarMeasure::two_point(0.4));
  try {
    canonical_prob(m, scalar_point(-0.4), a, b);
    FAIL() << "expected a constraint violation";
  } catch (const ConstraintViolation& v) {
    EXPECT_LT(v.witness().value, 0.0);
    EXPECT_NEAR(v.witness().value, (eps + c) / 4.0, 1e-12);
    EXPECT_EQ(v.witness().sigma, v.witness().tau);
  }
}

TEST(Wrongtrial, FineAtOrthogonal) {
  const HiddenVariableModel m = make_wrongtrial(ScalarMeasure::two_point(0.4));
  for (double g : {-0.4, 0.0, 0.4}) {
    const ProbabilityTable p = canonical_prob(m, scalar_point(g), UnitVector::e_z(), UnitVector::e_x());
    EXPECT_GE(p.min_entry(), 0.15 - 1e-15);
    EXPECT_LE(p.max_entry(), 0.35 + 1e-15);
  }
}

TEST(HvCorrelator, Examples) {
  const UnitVector z = UnitVector::e_z();
  const UnitVector b = at_cosine(z, UnitVector::e_x(), 0.5);
  EXPECT_NEAR(hv_correlator(make_qm_reference(), scalar_point(1.0), z, b), -0.5, 1e-15);
  EXPECT_NEAR(hv_correlator(make_family1(ScalarMeasure::two_point(0.4)), scalar_point(0.4), z, b),
              -0.5 + 0.75 * 0.4, 1e-15);
}

TEST(Cerf, EntriesAreZeroOrHalfWithTrivialMarginals) {
  RandomStream rng(3, 0);
  int checked = 0;
  for (int i = 0; i < 20'000; ++i) {
    const UnitVector u = sample_uniform_sphere(rng), v = sample_uniform_sphere(rng);
    const UnitVector a = sample_uniform_sphere(rng), b = sample_uniform_sphere(rng);
    const auto p = cerf_prob(u, v, a, b);
    if (!p) continue;
    ++checked;
    for (double e : p->entries()) ASSERT_TRUE(e == 0.0 || e == 0.5);
    ASSERT_EQ(p->sum(), 1.0);
    for (Outcome o : kOutcomes) {
      ASSERT_EQ(p->marginal_first(o), 0.5);
      ASSERT_EQ(p->marginal_second(o), 0.5);
    }
  }
  EXPECT_EQ(checked, 20'000);
}

TEST(Cerf, AmbiguousSignsReturnNothing) {
  const UnitVector a = UnitVector::e_z();
  EXPECT_FALSE(cerf_prob(UnitVector::e_x(), UnitVector::e_y(), a, a).has_value());
}

TEST(Cerf, MonteCarloReproducesSinglet) {
  const HiddenVariableModel m = make_cerf();
  const UnitVector a = UnitVector::e_z();
  const UnitVector b = at_cosine(a, UnitVector::e_x(), 0.5);
  RandomStream rng(21, 0);
  const int n = 1'000'000;
  int used = 0;
  double sum = 0.0, sum2 = 0.0;
  while (used < n) {
    const auto p = m.table(m.lambda_space().sample(rng), a, b);
    if (!p) continue;
    ++used;
    sum += (*p)(P, P);
    sum2 += (*p)(P, P) * (*p)(P, P);
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  EXPECT_NEAR(mean, (1.0 - 0.5) / 4.0, 5.0 * se);
}

TEST(Cerf, NoCFunction) {
  const HiddenVariableModel m = make_cerf();
  EXPECT_FALSE(m.is_canonical());
  EXPECT_THROW(m.c_function(), std::logic_error);
  RandomStream rng(1, 1);
  const LambdaPoint l = m.lambda_space().sample(rng);
  EXPECT_THROW(canonical_prob(m, l, UnitVector::e_z(), UnitVector::e_x()), std::logic_error);
}

TEST(ExcessCorrelation, DirectRuleRecoversCorrelatorPlusDot) {
  const HiddenVariableModel m = make_cerf();
  RandomStream rng(8, 0);
  for (int i = 0; i < 100; ++i) {
    const LambdaPoint l = m.lambda_space().sample(rng);
    const UnitVector a = sample_uniform_sphere(rng), b = sample_uniform_sphere(rng);
    const auto c = excess_correlation(m, l, a, b);
    const auto p = m.table(l, a, b);
    ASSERT_EQ(c.has_value(), p.has_value());
    if (c) {
      EXPECT_NEAR(*c, p->correlator() + dot(a, b), 1e-15);
    }
  }
}

// Algebraic invariants of canonical tables over random lambda and settings.
TEST(CanonicalModels, NormalizedWithTrivialMarginalsAndBoundedEntries) {
  const std::vector<HiddenVariableModel> models = {
      make_family1(ScalarMeasure::two_point(0.4)), make_family1(ScalarMeasure::uniform(0.45)),
      make_family2(ScalarMeasure::two_point(0.5), 8, 16), make_qm_reference()};
  RandomStream rng(99, 0);
  for (const HiddenVariableModel& m : models) {
    for (int i = 0; i < 20'000; ++i) {
      const LambdaPoint l = m.lambda_space().sample(rng);
      const UnitVector a = sample_uniform_sphere(rng);
      const UnitVector b = i % 2 ? sample_uniform_sphere(rng)
                                 : at_cosine(a, sample_uniform_sphere(rng), (i % 4 ? 1 : -1) * (1.0 - rng.uniform01() * 1e-3));
      const ProbabilityTable p = canonical_prob(m, l, a, b);
      ASSERT_NEAR(p.sum(), 1.0, 1e-12) << m.name();
      ASSERT_GE(p.min_entry(), -1e-12) << m.name();
      ASSERT_LE(p.max_entry(), 0.5 + 1e-12) << m.name();
      for (Outcome o : kOutcomes) {
        ASSERT_NEAR(p.marginal_first(o), 0.5, 1e-12);
        ASSERT_NEAR(p.marginal_second(o), 0.5, 1e-12);
      }
      ASSERT_LE(std::abs(hv_correlator(m, l, a, b)), 1.0 + 1e-12);
    }
  }
}

TEST(LambdaSpace, QuadratureIsProbabilityMeasure) {
  for (const LambdaSpace& space :
       {scalar_lambda_space(ScalarMeasure::two_point(0.4)), scalar_lambda_space(ScalarMeasure::uniform(0.4)),
        scalar_sphere_lambda_space(ScalarMeasure::two_point(0.5), 8, 16)}) {
    ASSERT_TRUE(space.has_quadrature());
    double total = 0.0;
    for (const WeightedPoint& w : space.quadrature()) {
      EXPECT_GT(w.weight, 0.0);
      EXPECT_EQ(w.point.shape(), space.shape());
      total += w.weight;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  EXPECT_FALSE(sphere_pair_lambda_space().has_quadrature());
  EXPECT_THROW(sphere_pair_lambda_space().quadrature(), std::logic_error);
}

TEST(LambdaSpace, RejectsBadQuadrature) {
  auto sampler = [](RandomStream&) { return scalar_point(0.0); };
  EXPECT_THROW(LambdaSpace({1, 0, 0}, sampler, std::vector<WeightedPoint>{{scalar_point(0.0), 0.7}}, "bad"),
               std::invalid_argument);
  EXPECT_THROW(LambdaSpace({1, 0, 0}, sampler,
                           std::vector<WeightedPoint>{{scalar_point(0.0), 1.5}, {scalar_point(1.0), -0.5}}, "bad"),
               std::invalid_argument);
}

TEST(LambdaSpace, SamplerAgreesWithQuadrature) {
  // Smooth test function x^2 + (u.e_z)^4 on (x, u).
  const LambdaSpace space = scalar_sphere_lambda_space(ScalarMeasure::uniform(0.4), 16, 32);
  auto f = [](const LambdaPoint& l) { return l.scalars[0] * l.scalars[0] + std::pow(l.vectors[0].z(), 4); };
  double quad = 0.0;
  for (const WeightedPoint& w : space.quadrature()) quad += w.weight * f(w.point);
  EXPECT_NEAR(quad, 0.16 / 3.0 + 0.2, 1e-12);
  RandomStream rng(4, 0);
  const int n = 200'000;
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = f(space.sample(rng));
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, quad, 5.0 * std::sqrt((sum2 / n - mean * mean) / n));
}

TEST(ScalarMeasure, Means) {
  EXPECT_DOUBLE_EQ(ScalarMeasure::two_point(0.4).mean(), 0.0);
  EXPECT_NEAR(ScalarMeasure::two_point(0.4, 0.75).mean(), 0.2, 1e-15);
  EXPECT_DOUBLE_EQ(ScalarMeasure::uniform(0.3).mean(), 0.0);
  EXPECT_DOUBLE_EQ(ScalarMeasure::uniform(0.3).max_abs(), 0.3);
}

TEST(ZeroAverage, FamiliesIntegrateToZeroByQuadrature) {
  const std::vector<HiddenVariableModel> models = {make_family1(ScalarMeasure::two_point(0.4)),
                                                   make_family2(ScalarMeasure::two_point(0.5)),
                                                   make_family2(ScalarMeasure::uniform(0.5), 16, 32)};
  RandomStream rng(6, 0);
  for (const HiddenVariableModel& m : models) {
    for (int k = 0; k < 5; ++k) {
      const UnitVector a = sample_uniform_sphere(rng), b = sample_uniform_sphere(rng);
      double mean = 0.0;
      for (const WeightedPoint& w : m.lambda_space().quadrature()) mean += w.weight * m.c(w.point, a, b);
      EXPECT_LT(std::abs(mean), 1e-10) << m.name();
    }
  }
}

}  // namespace
}  // namespace hv
