#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "hvsinglet/models.hpp"

namespace hv {

/// Analytic: average the fixed-lambda correlator over lambda draws.
/// Sampling: draw lambda, then an outcome pair, and average sigma * tau.
/// Quadrature: exact weighted sum of the fixed-lambda correlator over the
/// lambda-space quadrature (stderr 0).
enum class EstimatorMode { Analytic, Sampling, Quadrature };

const char* to_string(EstimatorMode mode);
std::optional<EstimatorMode> parse_estimator_mode(const std::string& text);

struct SettingPair {
  UnitVector a;
  UnitVector b;
};

struct ExperimentConfig {
  std::vector<SettingPair> settings;
  std::size_t shots = 1'000'000;
  std::uint64_t seed = 1;
  EstimatorMode mode = EstimatorMode::Analytic;
  unsigned threads = 1;
  /// Shots per work unit. Chunk c of pair p draws from RandomStream(seed, p << 32 | c).
  std::size_t chunk_size = 65'536;
};

struct CorrelationEstimate {
  SettingPair pair;
  double e_est = 0.0;
  double std_error = 0.0;
  double e_qm = 0.0;
  std::size_t n_shots = 0;
};

/// Draws (sigma, tau) with probability table(sigma, tau).
std::pair<Outcome, Outcome> sample_outcome(const ProbabilityTable& table, RandomStream& rng);

/// Throws std::invalid_argument for shots < 1, an out-of-range index, or
/// quadrature mode on a lambda space without quadrature.
CorrelationEstimate estimate_correlation(const HiddenVariableModel& model,
                                         const ExperimentConfig& config, std::size_t pair_index);

/// All pairs of the config. Bitwise identical for any thread count.
std::vector<CorrelationEstimate> run_experiment(const HiddenVariableModel& model,
                                                const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// CHSH

struct ChshSettings {
  UnitVector a0;
  UnitVector a1;
  UnitVector b0;
  UnitVector b1;
};

/// a0 = z, a1 = x, b0 = (x + z)/sqrt 2, b1 = (z - x)/sqrt 2.
ChshSettings optimal_chsh_settings();

struct ChshResult {
  ChshSettings settings;
  /// E(a0,b0), E(a0,b1), E(a1,b0), E(a1,b1)
  std::array<CorrelationEstimate, 4> correlators;
  double s = 0.0;
  double std_error = 0.0;
  std::size_t n_shots = 0;
};

/// S = |E00 + E01 + E10 - E11|. config.settings is ignored.
ChshResult chsh(const HiddenVariableModel& model, const ChshSettings& settings,
                const ExperimentConfig& config);

/// S from E = -a.b.
double qm_chsh(const ChshSettings& settings);

/// S at a single lambda, from the fixed-lambda correlators.
double hv_chsh(const HiddenVariableModel& model, const LambdaPoint& lambda,
               const ChshSettings& settings);

struct HvChshWitness {
  LambdaPoint lambda;
  ChshSettings settings;
  double s;
};

/// Largest per-lambda S over n_lambda draws at the given settings; returned
/// only when it exceeds 2 sqrt 2.
std::optional<HvChshWitness> find_hv_chsh_witness(const HiddenVariableModel& model,
                                                  const ChshSettings& settings,
                                                  std::size_t n_lambda, RandomStream& rng);

// ---------------------------------------------------------------------------
// Malus-law contrast

/// (1 + sigma a.u) / 2
double malus_marginal(const UnitVector& u, Outcome sigma, const UnitVector& a);

struct MalusReport {
  bool applicable = false;
  double max_gap = 0.0;
  std::optional<LambdaPoint> lambda;
  UnitVector a = UnitVector::e_z();
  Outcome sigma = Outcome::Plus;
  std::size_t samples = 0;
};

/// Max |model marginal - malus_marginal(u, sigma, a)| over sampled (lambda, a),
/// with u the first unit vector of lambda. Not applicable when lambda has none.
MalusReport malus_compliance_report(const HiddenVariableModel& model, std::size_t n_lambda,
                                    RandomStream& rng);

// ---------------------------------------------------------------------------
// CSV

inline constexpr const char* kCsvHeader = "ax,ay,az,bx,by,bz,E_est,stderr,E_qm,n_shots,mode,seed";

/// %.17g
std::string format_double(double value);

void write_csv_header(std::ostream& out);
void write_csv_rows(std::ostream& out, const std::vector<CorrelationEstimate>& estimates,
                    EstimatorMode mode, std::uint64_t seed);
/// Summary row: empty vector columns, E_est = S, E_qm = QM value of S.
void write_chsh_row(std::ostream& out, const ChshResult& result, EstimatorMode mode,
                    std::uint64_t seed);

}  // namespace hv
