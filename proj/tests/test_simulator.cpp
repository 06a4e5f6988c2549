#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "hvsinglet/simulator.hpp"

namespace hv {
namespace {

constexpr Outcome P = Outcome::Plus;
constexpr Outcome M = Outcome::Minus;

HiddenVariableModel family1() { return make_family1(ScalarMeasure::two_point(0.4)); }

UnitVector random_unit(RandomStream& rng) { return sample_uniform_sphere(rng); }

ExperimentConfig single_pair(const UnitVector& a, const UnitVector& b, std::size_t shots,
                             EstimatorMode mode) {
  ExperimentConfig config;
  config.settings = {{a, b}};
  config.shots = shots;
  config.mode = mode;
  return config;
}

// Counts each outcome over n draws and checks every frequency within 5 sigma.
void expect_frequencies(const ProbabilityTable& table, std::size_t n, std::uint64_t seed) {
  RandomStream rng(seed, 0);
  std::array<std::size_t, 4> counts{};
  for (std::size_t i = 0; i < n; ++i) {
    const auto [s, t] = sample_outcome(table, rng);
    ++counts[ProbabilityTable::index(s, t)];
  }
  for (std::size_t k = 0; k < 4; ++k) {
    const double p = table.entries()[k];
    const double freq = static_cast<double>(counts[k]) / static_cast<double>(n);
    if (p == 0.0) {
      EXPECT_EQ(counts[k], 0u) << "entry " << k;
      continue;
    }
    const double sigma = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    EXPECT_LT(std::abs(freq - p), 5.0 * sigma) << "entry " << k;
  }
}

// ---------------------------------------------------------------------------

TEST(SampleOutcome, FrequenciesMatchTable) {
  expect_frequencies(ProbabilityTable({0.5, 0.0, 0.0, 0.5}), 1'000'000, 1);
  expect_frequencies(ProbabilityTable({0.25, 0.25, 0.25, 0.25}), 1'000'000, 2);
  expect_frequencies(ProbabilityTable({0.35, 0.15, 0.15, 0.35}), 1'000'000, 3);
}

TEST(SampleOutcome, DegenerateTableAlwaysSameOutcome) {
  RandomStream rng(4, 0);
  const ProbabilityTable table({0.0, 0.0, 1.0, 0.0});
  for (int i = 0; i < 1000; ++i) {
    const auto [s, t] = sample_outcome(table, rng);
    EXPECT_EQ(s, M);
    EXPECT_EQ(t, P);
  }
}

TEST(EstimatorMode, RoundTrip) {
  for (EstimatorMode m : {EstimatorMode::Analytic, EstimatorMode::Sampling, EstimatorMode::Quadrature}) {
    EXPECT_EQ(parse_estimator_mode(to_string(m)), m);
  }
  EXPECT_FALSE(parse_estimator_mode("exact").has_value());
}

// ---------------------------------------------------------------------------

TEST(EstimateCorrelation, EqualSettingsGivePerfectAnticorrelation) {
  const HiddenVariableModel model = family1();
  RandomStream rng(5, 0);
  for (EstimatorMode mode : {EstimatorMode::Analytic, EstimatorMode::Sampling}) {
    for (int i = 0; i < 5; ++i) {
      const UnitVector a = random_unit(rng);
      const CorrelationEstimate e = estimate_correlation(model, single_pair(a, a, 10'000, mode), 0);
      EXPECT_NEAR(e.e_est, -1.0, 1e-12);
      EXPECT_NEAR(e.std_error, 0.0, 1e-12);
      EXPECT_EQ(e.e_qm, -1.0);
    }
  }
}

TEST(EstimateCorrelation, OrthogonalSettingsHaveZeroMean) {
  const HiddenVariableModel model = family1();
  const CorrelationEstimate e = estimate_correlation(
      model, single_pair(UnitVector::e_z(), UnitVector::e_x(), 1'000'000, EstimatorMode::Sampling), 0);
  EXPECT_EQ(e.e_qm, 0.0);
  EXPECT_LT(std::abs(e.e_est), 5.0 * e.std_error);
  EXPECT_NEAR(e.std_error, 1e-3, 1e-4);
}

TEST(EstimateCorrelation, Family2AtCosineHalf) {
  const HiddenVariableModel model = make_family2(ScalarMeasure::two_point(0.4));
  const UnitVector a = UnitVector::e_z();
  const UnitVector b = at_cosine(a, UnitVector::e_x(), 0.5);
  for (EstimatorMode mode : {EstimatorMode::Analytic, EstimatorMode::Sampling}) {
    const CorrelationEstimate e = estimate_correlation(model, single_pair(a, b, 1'000'000, mode), 0);
    EXPECT_NEAR(e.e_qm, -0.5, 1e-15);
    EXPECT_LT(std::abs(e.e_est + 0.5), 5.0 * e.std_error) << to_string(mode);
    EXPECT_EQ(e.n_shots, 1'000'000u);
  }
}

TEST(EstimateCorrelation, QuadratureIsExact) {
  const HiddenVariableModel model = make_family2(ScalarMeasure::uniform(0.5));
  RandomStream rng(6, 0);
  for (int i = 0; i < 10; ++i) {
    const UnitVector a = random_unit(rng);
    const UnitVector b = random_unit(rng);
    const CorrelationEstimate e = estimate_correlation(model, single_pair(a, b, 1, EstimatorMode::Quadrature), 0);
    EXPECT_NEAR(e.e_est, -dot(a, b), 1e-9);
    EXPECT_EQ(e.std_error, 0.0);
  }
}

TEST(EstimateCorrelation, SamplingVarianceExceedsAnalytic) {
  const HiddenVariableModel model = family1();
  const UnitVector a = UnitVector::e_z();
  const UnitVector b = at_cosine(a, UnitVector::e_x(), 0.3);
  const CorrelationEstimate analytic =
      estimate_correlation(model, single_pair(a, b, 200'000, EstimatorMode::Analytic), 0);
  const CorrelationEstimate sampling =
      estimate_correlation(model, single_pair(a, b, 200'000, EstimatorMode::Sampling), 0);
  EXPECT_LT(analytic.std_error, sampling.std_error);
  const double combined = std::hypot(analytic.std_error, sampling.std_error);
  EXPECT_LT(std::abs(analytic.e_est - sampling.e_est), 5.0 * combined);
  // Per-shot variance of sigma*tau is 1 - E^2; of the fixed-lambda correlator it is ((1-t^2) 0.4)^2.
  EXPECT_NEAR(sampling.std_error, std::sqrt((1.0 - 0.09) / 200'000.0), 1e-4);
  EXPECT_NEAR(analytic.std_error, 0.91 * 0.4 / std::sqrt(200'000.0), 1e-5);
}

TEST(EstimateCorrelation, RejectsBadInput) {
  const HiddenVariableModel model = family1();
  EXPECT_THROW(estimate_correlation(
                   model, single_pair(UnitVector::e_z(), UnitVector::e_x(), 0, EstimatorMode::Sampling), 0),
               std::invalid_argument);
  EXPECT_THROW(estimate_correlation(
                   model, single_pair(UnitVector::e_z(), UnitVector::e_x(), 10, EstimatorMode::Sampling), 1),
               std::invalid_argument);
  EXPECT_THROW(estimate_correlation(make_cerf(), single_pair(UnitVector::e_z(), UnitVector::e_x(), 10,
                                                             EstimatorMode::Quadrature),
                                    0),
               std::invalid_argument);
}

TEST(RunExperiment, IdenticalForAnyThreadCount) {
  const HiddenVariableModel model = make_family2(ScalarMeasure::two_point(0.4));
  RandomStream rng(7, 0);
  ExperimentConfig config;
  for (int i = 0; i < 6; ++i) config.settings.push_back({random_unit(rng), random_unit(rng)});
  config.shots = 300'000;
  config.chunk_size = 40'000;
  for (EstimatorMode mode : {EstimatorMode::Analytic, EstimatorMode::Sampling}) {
    config.mode = mode;
    config.threads = 1;
    const auto one = run_experiment(model, config);
    config.threads = 4;
    const auto four = run_experiment(model, config);
    ASSERT_EQ(one.size(), four.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
      EXPECT_EQ(one[i].e_est, four[i].e_est);
      EXPECT_EQ(one[i].std_error, four[i].std_error);
    }
  }
}

TEST(RunExperiment, SeedChangesEstimates) {
  const HiddenVariableModel model = family1();
  ExperimentConfig config = single_pair(UnitVector::e_z(), UnitVector::e_x(), 10'000, EstimatorMode::Sampling);
  const double first = run_experiment(model, config)[0].e_est;
  config.seed = 2;
  EXPECT_NE(run_experiment(model, config)[0].e_est, first);
}

TEST(RunExperiment, CerfReproducesSingletBySampling) {
  const HiddenVariableModel model = make_cerf();
  RandomStream rng(8, 0);
  ExperimentConfig config;
  for (int i = 0; i < 3; ++i) config.settings.push_back({random_unit(rng), random_unit(rng)});
  config.shots = 1'000'000;
  config.mode = EstimatorMode::Sampling;
  for (const CorrelationEstimate& e : run_experiment(model, config)) {
    EXPECT_LT(std::abs(e.e_est - e.e_qm), 5.0 * e.std_error);
  }
}

// ---------------------------------------------------------------------------

// Singlet correlator -cos(angle) evaluated from explicit angles in the x-z plane.
double singlet_chsh_from_angles(double a0, double a1, double b0, double b1) {
  auto e = [](double x, double y) { return -std::cos(x - y); };
  return std::abs(e(a0, b0) + e(a0, b1) + e(a1, b0) - e(a1, b1));
}

TEST(Chsh, OptimalSettingsReachTsirelson) {
  const ChshSettings s = optimal_chsh_settings();
  // a0 = z (angle 0), a1 = x (pi/2), b0 at pi/4, b1 at -pi/4, measured from z towards x.
  const double pi = std::numbers::pi;
  const double oracle = singlet_chsh_from_angles(0.0, pi / 2, pi / 4, -pi / 4);
  EXPECT_NEAR(oracle, 2.0 * std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(qm_chsh(s), oracle, 1e-15);

  ExperimentConfig config;
  config.mode = EstimatorMode::Quadrature;
  const ChshResult q = chsh(family1(), s, config);
  EXPECT_NEAR(q.s, oracle, 1e-12);
  EXPECT_EQ(q.std_error, 0.0);

  config.mode = EstimatorMode::Sampling;
  config.shots = 1'000'000;
  const ChshResult r = chsh(make_family2(ScalarMeasure::two_point(0.4)), s, config);
  EXPECT_LT(std::abs(r.s - oracle), 5.0 * r.std_error);
  EXPECT_EQ(r.n_shots, 4'000'000u);
}

TEST(Chsh, DegenerateSettingsGiveTwo) {
  const UnitVector z = UnitVector::e_z();
  const ChshSettings s{z, z, z, z};
  EXPECT_NEAR(qm_chsh(s), 2.0, 1e-15);
  ExperimentConfig config;
  config.mode = EstimatorMode::Analytic;
  config.shots = 1000;
  EXPECT_NEAR(chsh(family1(), s, config).s, 2.0, 1e-12);
}

TEST(Chsh, RandomSettingsRespectTsirelson) {
  const HiddenVariableModel model = family1();
  RandomStream rng(9, 0);
  ExperimentConfig config;
  config.mode = EstimatorMode::Analytic;
  config.shots = 10'000;
  for (int i = 0; i < 100; ++i) {
    const ChshSettings s{random_unit(rng), random_unit(rng), random_unit(rng), random_unit(rng)};
    EXPECT_LE(qm_chsh(s), 2.0 * std::sqrt(2.0) + 1e-12);
    config.seed = static_cast<std::uint64_t>(i) + 1;
    const ChshResult r = chsh(model, s, config);
    EXPECT_LE(r.s, 2.0 * std::sqrt(2.0) + 5.0 * r.std_error);
  }
}

TEST(Chsh, SingleLambdaCanExceedTsirelson) {
  // At the optimal settings every |a.b| = 1/sqrt 2, so each correlator is -a.b + g/2 and
  // S(lambda) = |-2 sqrt 2 + g|; g = -0.45 gives 2 sqrt 2 + 0.45.
  const HiddenVariableModel model = make_family1(ScalarMeasure::two_point(0.45));
  RandomStream rng(10, 0);
  const auto witness = find_hv_chsh_witness(model, optimal_chsh_settings(), 100, rng);
  ASSERT_TRUE(witness.has_value());
  EXPECT_NEAR(witness->s, 2.0 * std::sqrt(2.0) + 0.45, 1e-12);
  EXPECT_NEAR(hv_chsh(model, witness->lambda, witness->settings), witness->s, 1e-15);
}

TEST(Chsh, ReferenceModelHasNoWitness) {
  RandomStream rng(11, 0);
  EXPECT_FALSE(find_hv_chsh_witness(make_qm_reference(), optimal_chsh_settings(), 100, rng).has_value());
}

// ---------------------------------------------------------------------------

TEST(Malus, MarginalExamples) {
  const UnitVector z = UnitVector::e_z();
  EXPECT_DOUBLE_EQ(malus_marginal(z, P, z), 1.0);
  EXPECT_DOUBLE_EQ(malus_marginal(z, M, z), 0.0);
  EXPECT_DOUBLE_EQ(malus_marginal(z, P, UnitVector::e_x()), 0.5);
  EXPECT_DOUBLE_EQ(malus_marginal(z, P, -z), 0.0);
  EXPECT_NEAR(malus_marginal(z, P, at_cosine(z, UnitVector::e_x(), 0.6)), 0.8, 1e-15);
}

TEST(Malus, Family2MarginalIgnoresU) {
  RandomStream rng(12, 0);
  const MalusReport report = malus_compliance_report(make_family2(ScalarMeasure::two_point(0.4)), 10'000, rng);
  ASSERT_TRUE(report.applicable);
  EXPECT_GE(report.max_gap, 0.499);
  EXPECT_LE(report.max_gap, 0.5);
  ASSERT_TRUE(report.lambda.has_value());
  EXPECT_EQ(report.samples, 10'000u);
}

TEST(Malus, NotApplicableWithoutVector) {
  RandomStream rng(13, 0);
  EXPECT_FALSE(malus_compliance_report(family1(), 100, rng).applicable);
}

// ---------------------------------------------------------------------------

TEST(Csv, FormatsRows) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(-1.0), "-1");

  CorrelationEstimate e{{UnitVector::e_z(), UnitVector::e_x()}};
  e.e_est = 0.25;
  e.std_error = 0.5;
  e.e_qm = 0.0;
  e.n_shots = 100;
  std::ostringstream out;
  write_csv_header(out);
  write_csv_rows(out, {e}, EstimatorMode::Sampling, 42);
  EXPECT_EQ(out.str(), std::string(kCsvHeader) + "\n0,0,1,1,0,0,0.25,0.5,0,100,sampling,42\n");
}

TEST(Csv, ChshRow) {
  ExperimentConfig config;
  config.mode = EstimatorMode::Quadrature;
  const ChshResult r = chsh(make_qm_reference(), optimal_chsh_settings(), config);
  std::ostringstream out;
  write_chsh_row(out, r, EstimatorMode::Quadrature, 3);
  EXPECT_EQ(out.str().rfind(",,,,,,", 0), 0u);
  EXPECT_NE(out.str().find(",chsh-quadrature,3\n"), std::string::npos);
}

TEST(Csv, RerunIsByteIdentical) {
  const HiddenVariableModel model = family1();
  ExperimentConfig config = single_pair(UnitVector::e_z(), UnitVector::e_y(), 50'000, EstimatorMode::Sampling);
  std::ostringstream first;
  std::ostringstream second;
  write_csv_rows(first, run_experiment(model, config), config.mode, config.seed);
  config.threads = 3;
  write_csv_rows(second, run_experiment(model, config), config.mode, config.seed);
  EXPECT_EQ(first.str(), second.str());
}

}  // namespace
}  // namespace hv
