#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hvsinglet/models.hpp"

namespace hv {

enum class Status { Pass, Fail, Inconclusive, NotApplicable };
const char* to_string(Status status);

namespace constraint {
inline constexpr const char* kNormalization = "normalization";
inline constexpr const char* kPositivity = "positivity";
inline constexpr const char* kHalfBound = "half-bound";
inline constexpr const char* kMarginalTriviality = "marginal-triviality";
inline constexpr const char* kZeroAverage = "zero-average";
inline constexpr const char* kCoincidentZero = "coincident-zero";
inline constexpr const char* kExponentBound = "exponent-bound";
inline constexpr const char* kEndpointGBound = "endpoint-g-bound";
inline constexpr const char* kExpansion = "expansion";
inline constexpr const char* kQmReproduction = "qm-reproduction";
}  // namespace constraint

/// Outcome of one numerical check. A failing report always carries a witness;
/// a passing one carries the extremal value found.
struct ConstraintReport {
  std::string id;
  Status status = Status::Pass;
  double extremal_value = 0.0;
  std::optional<Witness> witness;
  double tolerance = 0.0;
  std::size_t samples_used = 0;
  std::string note;
};

// ---------------------------------------------------------------------------
// Delta decomposition: 4 p(s,t) = 1 - s t a.b + s A + t B + s t C.

struct DeltaDecomposition {
  double A;
  double B;
  double C;
};

/// Throws std::invalid_argument when the table does not sum to 1 within 1e-12.
DeltaDecomposition decompose_delta(const ProbabilityTable& table, const UnitVector& a,
                                   const UnitVector& b);
ProbabilityTable reconstruct_table(const DeltaDecomposition& d, double a_dot_b);

// ---------------------------------------------------------------------------
// Individual checks. Each consumes only the stream it is handed.

enum class IntegrationMode { Quadrature, MonteCarlo };

ConstraintReport check_normalization(const HiddenVariableModel& model, std::size_t n_lambda,
                                     std::size_t n_settings, RandomStream& rng);

/// All entries in [-1e-12, 1/2 + 1e-12]. With endpoint_focus half of the
/// setting pairs have a.b within 1e-2 of +-1.
ConstraintReport check_positivity(const HiddenVariableModel& model, std::size_t n_lambda,
                                  std::size_t n_settings, RandomStream& rng,
                                  bool endpoint_focus = true);
/// Upper bound only: all entries <= 1/2 + 1e-12.
ConstraintReport check_half_bound(const HiddenVariableModel& model, std::size_t n_lambda,
                                  std::size_t n_settings, RandomStream& rng);

ConstraintReport check_marginal_triviality(const HiddenVariableModel& model, std::size_t n_lambda,
                                           std::size_t n_settings, RandomStream& rng,
                                           double tolerance = 1e-10);

/// Mean of C at fixed settings. Quadrature: |mean| < 1e-10. Monte Carlo:
/// |mean| < 5 stderr, inconclusive when stderr > 1e-2.
ConstraintReport check_zero_average(const HiddenVariableModel& model, const UnitVector& a,
                                    const UnitVector& b, IntegrationMode mode, RandomStream& rng,
                                    std::size_t mc_samples = 1'000'000);

/// max |C(lambda, a, +-a)| < 1e-10. For discrete measures the scan runs over
/// the quadrature nodes, which are the support of the measure.
ConstraintReport check_coincident_zero(const HiddenVariableModel& model, std::size_t n_a,
                                       RandomStream& rng, std::size_t n_lambda = 1000);

struct ExponentEstimate {
  double s_plus = 0.0;   // from (1 + a.b) -> 0
  double s_minus = 0.0;  // from (1 - a.b) -> 0
  double residual = 0.0; // RMS residual of the log-log fits
  bool conclusive = false;
  std::string note;
};

/// Least-squares slope of log mean|C| against log(1 -/+ a.b) over 20
/// log-spaced offsets in [1e-5, 1e-2], averaging over lambda draws and rays.
ExponentEstimate estimate_exponents(const HiddenVariableModel& model, RandomStream& rng,
                                    std::size_t n_lambda = 256, std::size_t n_rays = 16);

/// s+ >= 1 and s- >= 1 up to the 0.05 fit tolerance. Inconclusive when the
/// fit residual exceeds 0.1 or C stays below 1e-14.
ConstraintReport check_exponent_bound(const HiddenVariableModel& model, RandomStream& rng);

/// |G(lambda, a, +-a)| <= 2^-(s+-) + 1e-9 on every side whose opposite
/// exponent is 1, and G nonzero on more than 1% of sampled lambda there.
ConstraintReport check_endpoint_g_bound(const HiddenVariableModel& model, RandomStream& rng,
                                        std::size_t n_lambda = 512, std::size_t n_rays = 16);

/// Lowest-order probability near coincident settings: at a.b = +-(1 - eps),
/// p(s, +-s) = (eps / 4) (1 +- 2^(s+-) G(lambda, a, +-a)), with deviation
/// measured relative to eps / 4 and required below 10 eps.
ConstraintReport check_expansion(const HiddenVariableModel& model,
                                 const std::vector<double>& epsilons, RandomStream& rng,
                                 std::size_t n_lambda = 256, std::size_t n_rays = 8);

/// Averaged table against the singlet over random setting pairs. Quadrature:
/// max deviation < 1e-9. Monte Carlo: every entry within 5 stderr (the
/// extremal value is then the largest z-score).
ConstraintReport check_qm_reproduction(const HiddenVariableModel& model, std::size_t n_settings,
                                       IntegrationMode mode, RandomStream& rng,
                                       std::size_t mc_samples = 1'000'000);

// ---------------------------------------------------------------------------
// Suite

struct ValidatorConfig {
  std::size_t n_lambda = 1000;
  std::size_t n_settings = 1000;
  std::size_t n_coincident = 64;
  std::size_t n_zero_average_settings = 5;
  std::size_t n_qm_settings = 20;
  std::size_t mc_samples = 1'000'000;
  std::vector<double> expansion_epsilons = {1e-2, 1e-3, 1e-4};
  /// Quadrature when the lambda space has one, Monte Carlo otherwise.
  std::optional<IntegrationMode> mode;
  unsigned threads = 1;
};

/// Runs every check; check i draws from RandomStream(seed, i), so reports do
/// not depend on the thread count.
std::vector<ConstraintReport> run_full_suite(const HiddenVariableModel& model,
                                             const ValidatorConfig& config, std::uint64_t seed);

/// Fail if any check failed, else Inconclusive if any was, else Pass.
Status overall_status(const std::vector<ConstraintReport>& reports);

nlohmann::json to_json(const Witness& witness);
nlohmann::json to_json(const ConstraintReport& report);
nlohmann::json suite_to_json(const std::string& model_name, std::uint64_t seed,
                             const std::vector<ConstraintReport>& reports);

}  // namespace hv
