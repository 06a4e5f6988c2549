#include "hvsinglet/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace hv {

const char* to_string(EstimatorMode mode) {
  switch (mode) {
    case EstimatorMode::Analytic: return "analytic";
    case EstimatorMode::Sampling: return "sampling";
    case EstimatorMode::Quadrature: return "quadrature";
  }
  return "unknown";
}

std::optional<EstimatorMode> parse_estimator_mode(const std::string& text) {
  if (text == "analytic") return EstimatorMode::Analytic;
  if (text == "sampling") return EstimatorMode::Sampling;
  if (text == "quadrature") return EstimatorMode::Quadrature;
  return std::nullopt;
}

std::pair<Outcome, Outcome> sample_outcome(const ProbabilityTable& table, RandomStream& rng) {
  static constexpr std::array<std::pair<Outcome, Outcome>, 4> kOrder = {{
      {Outcome::Plus, Outcome::Plus},
      {Outcome::Plus, Outcome::Minus},
      {Outcome::Minus, Outcome::Plus},
      {Outcome::Minus, Outcome::Minus},
  }};
  const double u = rng.uniform01() * table.sum();
  double cumulative = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    cumulative += table.entries()[k];
    if (u < cumulative) return kOrder[k];
  }
  // Skip trailing zero-probability entries reached only through rounding.
  for (std::size_t k = 4; k-- > 0;) {
    if (table.entries()[k] > 0.0) return kOrder[k];
  }
  return kOrder[3];
}

namespace {

// Count, mean and sum of squared deviations; merged with Chan's formula.
struct Stats {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }

  void merge(const Stats& other) {
    if (other.n == 0) return;
    if (n == 0) {
      *this = other;
      return;
    }
    const double total = static_cast<double>(n + other.n);
    const double d = other.mean - mean;
    mean += d * static_cast<double>(other.n) / total;
    m2 += other.m2 + d * d * static_cast<double>(n) * static_cast<double>(other.n) / total;
    n += other.n;
  }

  double std_error() const {
    if (n < 2) return 0.0;
    return std::sqrt(std::max(0.0, m2 / static_cast<double>(n - 1)) / static_cast<double>(n));
  }
};

void validate_config(const HiddenVariableModel& model, const ExperimentConfig& config) {
  if (config.shots < 1) throw std::invalid_argument("shots must be at least 1");
  if (config.chunk_size < 1) throw std::invalid_argument("chunk_size must be at least 1");
  if (config.mode == EstimatorMode::Quadrature && !model.lambda_space().has_quadrature()) {
    throw std::invalid_argument("quadrature mode needs a lambda space with quadrature");
  }
}

std::optional<ProbabilityTable> table_at(const HiddenVariableModel& model, const LambdaPoint& l,
                                         const SettingPair& pair) {
  return model.table(l, pair.a, pair.b);
}

Stats run_chunk(const HiddenVariableModel& model, const ExperimentConfig& config,
                std::size_t pair_index, std::size_t chunk_index) {
  const SettingPair& pair = config.settings[pair_index];
  const std::size_t begin = chunk_index * config.chunk_size;
  const std::size_t count = std::min(config.chunk_size, config.shots - begin);
  RandomStream rng(config.seed, (static_cast<std::uint64_t>(pair_index) << 32) | chunk_index);
  const LambdaSpace& space = model.lambda_space();
  Stats stats;
  while (stats.n < count) {
    const auto table = table_at(model, space.sample(rng), pair);
    if (!table) continue;
    if (config.mode == EstimatorMode::Sampling) {
      const auto [sigma, tau] = sample_outcome(*table, rng);
      stats.add(static_cast<double>(sign_of(sigma) * sign_of(tau)));
    } else {
      stats.add(table->correlator());
    }
  }
  return stats;
}

CorrelationEstimate quadrature_estimate(const HiddenVariableModel& model, const SettingPair& pair) {
  double sum = 0.0;
  double weight = 0.0;
  std::size_t used = 0;
  for (const WeightedPoint& node : model.lambda_space().quadrature()) {
    const auto table = model.table(node.point, pair.a, pair.b);
    if (!table) continue;
    sum += node.weight * table->correlator();
    weight += node.weight;
    ++used;
  }
  return {pair, sum / weight, 0.0, 0.0 - dot(pair.a, pair.b), used};
}

CorrelationEstimate finish(const SettingPair& pair, const Stats& stats) {
  return {pair, stats.mean, stats.std_error(), 0.0 - dot(pair.a, pair.b), stats.n};
}

std::size_t chunk_count(const ExperimentConfig& config) {
  return (config.shots + config.chunk_size - 1) / config.chunk_size;
}

}  // namespace

CorrelationEstimate estimate_correlation(const HiddenVariableModel& model,
                                         const ExperimentConfig& config, std::size_t pair_index) {
  validate_config(model, config);
  if (pair_index >= config.settings.size()) throw std::invalid_argument("pair index out of range");
  const SettingPair& pair = config.settings[pair_index];
  if (config.mode == EstimatorMode::Quadrature) return quadrature_estimate(model, pair);
  Stats total;
  for (std::size_t c = 0; c < chunk_count(config); ++c) total.merge(run_chunk(model, config, pair_index, c));
  return finish(pair, total);
}

std::vector<CorrelationEstimate> run_experiment(const HiddenVariableModel& model,
                                                const ExperimentConfig& config) {
  validate_config(model, config);
  const std::size_t n_pairs = config.settings.size();
  std::vector<CorrelationEstimate> out;
  out.reserve(n_pairs);
  if (config.mode == EstimatorMode::Quadrature) {
    for (const SettingPair& pair : config.settings) out.push_back(quadrature_estimate(model, pair));
    return out;
  }

  const std::size_t n_chunks = chunk_count(config);
  const std::size_t n_tasks = n_pairs * n_chunks;
  std::vector<Stats> partial(n_tasks);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t task = next++; task < n_tasks; task = next++) {
      partial[task] = run_chunk(model, config, task / n_chunks, task % n_chunks);
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(config.threads, 1, std::max<std::size_t>(n_tasks, 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  for (std::size_t p = 0; p < n_pairs; ++p) {
    Stats total;
    for (std::size_t c = 0; c < n_chunks; ++c) total.merge(partial[p * n_chunks + c]);
    out.push_back(finish(config.settings[p], total));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CHSH

ChshSettings optimal_chsh_settings() {
  return {UnitVector::e_z(), UnitVector::e_x(), UnitVector(1.0, 0.0, 1.0), UnitVector(-1.0, 0.0, 1.0)};
}

namespace {

std::array<SettingPair, 4> chsh_pairs(const ChshSettings& s) {
  return {{{s.a0, s.b0}, {s.a0, s.b1}, {s.a1, s.b0}, {s.a1, s.b1}}};
}

double combine(double e00, double e01, double e10, double e11) {
  return std::abs(e00 + e01 + e10 - e11);
}

}  // namespace

ChshResult chsh(const HiddenVariableModel& model, const ChshSettings& settings,
                const ExperimentConfig& config) {
  ExperimentConfig run = config;
  const auto pairs = chsh_pairs(settings);
  run.settings.assign(pairs.begin(), pairs.end());
  const std::vector<CorrelationEstimate> est = run_experiment(model, run);
  ChshResult result{settings, {est[0], est[1], est[2], est[3]}, 0.0, 0.0, 0};
  result.s = combine(est[0].e_est, est[1].e_est, est[2].e_est, est[3].e_est);
  double var = 0.0;
  for (const CorrelationEstimate& e : est) {
    var += e.std_error * e.std_error;
    result.n_shots += e.n_shots;
  }
  result.std_error = std::sqrt(var);
  return result;
}

double qm_chsh(const ChshSettings& s) {
  return combine(-dot(s.a0, s.b0), -dot(s.a0, s.b1), -dot(s.a1, s.b0), -dot(s.a1, s.b1));
}

double hv_chsh(const HiddenVariableModel& model, const LambdaPoint& lambda,
               const ChshSettings& settings) {
  std::array<double, 4> e{};
  const auto pairs = chsh_pairs(settings);
  for (std::size_t k = 0; k < 4; ++k) {
    const auto table = model.table(lambda, pairs[k].a, pairs[k].b);
    if (!table) return 0.0;
    e[k] = table->correlator();
  }
  return combine(e[0], e[1], e[2], e[3]);
}

std::optional<HvChshWitness> find_hv_chsh_witness(const HiddenVariableModel& model,
                                                  const ChshSettings& settings,
                                                  std::size_t n_lambda, RandomStream& rng) {
  std::optional<HvChshWitness> best;
  for (std::size_t i = 0; i < n_lambda; ++i) {
    LambdaPoint l = model.lambda_space().sample(rng);
    const double s = hv_chsh(model, l, settings);
    if (!best || s > best->s) best = HvChshWitness{std::move(l), settings, s};
  }
  if (best && best->s > 2.0 * std::numbers::sqrt2) return best;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Malus

double malus_marginal(const UnitVector& u, Outcome sigma, const UnitVector& a) {
  return (1.0 + sign_of(sigma) * dot(a, u)) / 2.0;
}

MalusReport malus_compliance_report(const HiddenVariableModel& model, std::size_t n_lambda,
                                    RandomStream& rng) {
  MalusReport report;
  if (model.lambda_space().shape().vectors == 0) return report;
  report.applicable = true;
  report.max_gap = -1.0;
  while (report.samples < n_lambda) {
    LambdaPoint l = model.lambda_space().sample(rng);
    const UnitVector a = sample_uniform_sphere(rng);
    const UnitVector b = sample_uniform_sphere(rng);
    const auto table = model.table(l, a, b);
    if (!table) continue;
    ++report.samples;
    for (Outcome sigma : kOutcomes) {
      const double gap = std::abs(table->marginal_first(sigma) - malus_marginal(l.vectors[0], sigma, a));
      if (gap > report.max_gap) {
        report.max_gap = gap;
        report.lambda = l;
        report.a = a;
        report.sigma = sigma;
      }
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// CSV

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_csv_header(std::ostream& out) { out << kCsvHeader << '\n'; }

void write_csv_rows(std::ostream& out, const std::vector<CorrelationEstimate>& estimates,
                    EstimatorMode mode, std::uint64_t seed) {
  for (const CorrelationEstimate& e : estimates) {
    for (const UnitVector& v : {e.pair.a, e.pair.b}) {
      out << format_double(v.x()) << ',' << format_double(v.y()) << ',' << format_double(v.z()) << ',';
    }
    out << format_double(e.e_est) << ',' << format_double(e.std_error) << ',' << format_double(e.e_qm)
        << ',' << e.n_shots << ',' << to_string(mode) << ',' << seed << '\n';
  }
}

void write_chsh_row(std::ostream& out, const ChshResult& result, EstimatorMode mode,
                    std::uint64_t seed) {
  out << ",,,,,," << format_double(result.s) << ',' << format_double(result.std_error) << ','
      << format_double(qm_chsh(result.settings)) << ',' << result.n_shots << ",chsh-"
      << to_string(mode) << ',' << seed << '\n';
}

}  // namespace hv
