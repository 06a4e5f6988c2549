#include "hvsinglet/validator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace hv {

const char* to_string(Status status) {
  switch (status) {
    case Status::Pass: return "pass";
    case Status::Fail: return "fail";
    case Status::Inconclusive: return "inconclusive";
    case Status::NotApplicable: return "not-applicable";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Delta decomposition

DeltaDecomposition decompose_delta(const ProbabilityTable& table, const UnitVector& a,
                                   const UnitVector& b) {
  if (std::abs(table.sum() - 1.0) > kAlgebraicTol) {
    throw std::invalid_argument("decompose_delta: table is not normalized");
  }
  const double t = dot(a, b);
  DeltaDecomposition d{0.0, 0.0, 0.0};
  double delta_sum = 0.0;
  for (Outcome sigma : kOutcomes) {
    for (Outcome tau : kOutcomes) {
      const int st = sign_of(sigma) * sign_of(tau);
      const double delta = 4.0 * table(sigma, tau) - (1.0 - st * t);
      d.A += sign_of(sigma) * delta / 4.0;
      d.B += sign_of(tau) * delta / 4.0;
      d.C += st * delta / 4.0;
      delta_sum += delta;
    }
  }
  if (std::abs(delta_sum) > 4.0 * kAlgebraicTol) {
    throw std::invalid_argument("decompose_delta: deltas do not sum to zero");
  }
  return d;
}

ProbabilityTable reconstruct_table(const DeltaDecomposition& d, double t) {
  ProbabilityTable table;
  for (Outcome sigma : kOutcomes) {
    for (Outcome tau : kOutcomes) {
      const int s = sign_of(sigma);
      const int u = sign_of(tau);
      table(sigma, tau) = (1.0 - s * u * t + s * d.A + u * d.B + s * u * d.C) / 4.0;
    }
  }
  return table;
}

namespace {

constexpr double kQuadratureTol = 1e-10;
constexpr double kMcSigmas = 5.0;
constexpr double kFitTolerance = 0.05;
constexpr double kFitResidualLimit = 0.1;
constexpr double kEndpointProbe = 1e-10;

// Welford accumulator.
struct Moments {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }
  double stderr_of_mean() const {
    if (n < 2) return 0.0;
    return std::sqrt(std::max(0.0, m2 / static_cast<double>(n - 1)) / static_cast<double>(n));
  }
};

UnitVector direction_off(const UnitVector& a, RandomStream& rng) {
  for (;;) {
    const UnitVector d = sample_uniform_sphere(rng);
    if (std::abs(dot(a, d)) < 0.99) return d;
  }
}

struct ProbePair {
  UnitVector a;
  UnitVector b;
};

ProbePair random_pair(RandomStream& rng, bool near_endpoint) {
  const UnitVector a = sample_uniform_sphere(rng);
  if (!near_endpoint) return {a, sample_uniform_sphere(rng)};
  const double eps = std::pow(10.0, rng.uniform(-6.0, -2.0));
  const double side = rng.uniform01() < 0.5 ? 1.0 : -1.0;
  return {a, at_cosine(a, direction_off(a, rng), side * (1.0 - eps))};
}

std::vector<LambdaPoint> draw_lambdas(const HiddenVariableModel& model, std::size_t n,
                                      RandomStream& rng) {
  std::vector<LambdaPoint> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(model.lambda_space().sample(rng));
  return out;
}

// Calls visit(lambda, a, b, table) over n_settings pairs x n_lambda draws.
// Returns the number of tables evaluated (direct-rule ambiguities skipped).
template <typename Visit>
std::size_t scan_tables(const HiddenVariableModel& model, std::size_t n_lambda,
                        std::size_t n_settings, RandomStream& rng, bool endpoint_focus,
                        Visit&& visit) {
  const std::vector<LambdaPoint> lambdas = draw_lambdas(model, n_lambda, rng);
  std::size_t used = 0;
  for (std::size_t i = 0; i < n_settings; ++i) {
    const ProbePair pair = random_pair(rng, endpoint_focus && (i % 2 == 1));
    for (const LambdaPoint& l : lambdas) {
      const auto table = model.table(l, pair.a, pair.b);
      if (!table) continue;
      ++used;
      visit(l, pair.a, pair.b, *table);
    }
  }
  return used;
}

Witness make_witness(const LambdaPoint& l, const UnitVector& a, const UnitVector& b,
                     Outcome sigma, Outcome tau, double value) {
  return Witness{l, a, b, sigma, tau, value};
}

std::optional<Exponents> known_exponents(const HiddenVariableModel& model, RandomStream& rng) {
  if (const auto& declared = model.c_function().exponents) return declared;
  const ExponentEstimate est = estimate_exponents(model, rng);
  if (!est.conclusive) return std::nullopt;
  auto snap = [](double s) {
    const double r = std::round(s);
    return std::abs(s - r) <= kFitTolerance ? r : s;
  };
  return Exponents{snap(est.s_plus), snap(est.s_minus)};
}

bool is_one(double s) { return std::abs(s - 1.0) < 1e-12; }

// G = C / ((1 + t)^s+ (1 - t)^s-)
double frobenius_g(double c, double t, const Exponents& e) {
  return c / (std::pow(1.0 + t, e.s_plus) * std::pow(1.0 - t, e.s_minus));
}

}  // namespace

// ---------------------------------------------------------------------------
// Checks

ConstraintReport check_normalization(const HiddenVariableModel& model, std::size_t n_lambda,
                                     std::size_t n_settings, RandomStream& rng) {
  ConstraintReport r;
  r.id = constraint::kNormalization;
  r.tolerance = kAlgebraicTol;
  double worst = -1.0;
  std::optional<Witness> at;
  r.samples_used = scan_tables(model, n_lambda, n_settings, rng, true,
                               [&](const LambdaPoint& l, const UnitVector& a, const UnitVector& b,
                                   const ProbabilityTable& table) {
                                 const double dev = std::abs(table.sum() - 1.0);
                                 if (dev > worst) {
                                   worst = dev;
                                   at = make_witness(l, a, b, Outcome::Plus, Outcome::Plus, table.sum());
                                 }
                               });
  r.extremal_value = std::max(worst, 0.0);
  if (worst > kAlgebraicTol) {
    r.status = Status::Fail;
    r.witness = at;
  }
  r.note = "max |sum p - 1|; witness value is the table sum";
  return r;
}

ConstraintReport check_positivity(const HiddenVariableModel& model, std::size_t n_lambda,
                                  std::size_t n_settings, RandomStream& rng, bool endpoint_focus) {
  ConstraintReport r;
  r.id = constraint::kPositivity;
  r.tolerance = kAlgebraicTol;
  std::optional<Witness> lowest;
  std::optional<Witness> highest;
  r.samples_used = scan_tables(
      model, n_lambda, n_settings, rng, endpoint_focus,
      [&](const LambdaPoint& l, const UnitVector& a, const UnitVector& b, const ProbabilityTable& table) {
        for (Outcome sigma : kOutcomes) {
          for (Outcome tau : kOutcomes) {
            const double p = table(sigma, tau);
            if (!lowest || p < lowest->value) lowest = make_witness(l, a, b, sigma, tau, p);
            if (!highest || p > highest->value) highest = make_witness(l, a, b, sigma, tau, p);
          }
        }
      });
  if (!lowest) {
    r.status = Status::Inconclusive;
    r.note = "no table evaluated";
    return r;
  }
  r.extremal_value = lowest->value;
  r.note = "entries must lie in [-tol, 1/2 + tol]; extremal value is the smallest entry";
  if (lowest->value < -kAlgebraicTol) {
    r.status = Status::Fail;
    r.witness = lowest;
  } else if (highest->value > 0.5 + kAlgebraicTol) {
    r.status = Status::Fail;
    r.extremal_value = highest->value;
    r.witness = highest;
  }
  return r;
}

ConstraintReport check_half_bound(const HiddenVariableModel& model, std::size_t n_lambda,
                                  std::size_t n_settings, RandomStream& rng) {
  ConstraintReport r;
  r.id = constraint::kHalfBound;
  r.tolerance = kAlgebraicTol;
  std::optional<Witness> highest;
  r.samples_used = scan_tables(
      model, n_lambda, n_settings, rng, true,
      [&](const LambdaPoint& l, const UnitVector& a, const UnitVector& b, const ProbabilityTable& table) {
        for (Outcome sigma : kOutcomes) {
          for (Outcome tau : kOutcomes) {
            const double p = table(sigma, tau);
            if (!highest || p > highest->value) highest = make_witness(l, a, b, sigma, tau, p);
          }
        }
      });
  if (!highest) {
    r.status = Status::Inconclusive;
    r.note = "no table evaluated";
    return r;
  }
  r.extremal_value = highest->value;
  r.note = "largest entry; must not exceed 1/2 + tol";
  if (highest->value > 0.5 + kAlgebraicTol) {
    r.status = Status::Fail;
    r.witness = highest;
  }
  return r;
}

ConstraintReport check_marginal_triviality(const HiddenVariableModel& model, std::size_t n_lambda,
                                           std::size_t n_settings, RandomStream& rng,
                                           double tolerance) {
  ConstraintReport r;
  r.id = constraint::kMarginalTriviality;
  r.tolerance = tolerance;
  double worst = -1.0;
  std::optional<Witness> at;
  r.samples_used = scan_tables(
      model, n_lambda, n_settings, rng, true,
      [&](const LambdaPoint& l, const UnitVector& a, const UnitVector& b, const ProbabilityTable& table) {
        for (Outcome o : kOutcomes) {
          const double first = table.marginal_first(o);
          const double second = table.marginal_second(o);
          if (std::abs(first - 0.5) > worst) {
            worst = std::abs(first - 0.5);
            at = make_witness(l, a, b, o, Outcome::Plus, first);
          }
          if (std::abs(second - 0.5) > worst) {
            worst = std::abs(second - 0.5);
            at = make_witness(l, a, b, Outcome::Plus, o, second);
          }
        }
      });
  r.extremal_value = std::max(worst, 0.0);
  r.note = "max |marginal - 1/2| over both wings; witness value is the marginal";
  if (worst > tolerance) {
    r.status = Status::Fail;
    r.witness = at;
  }
  return r;
}

ConstraintReport check_zero_average(const HiddenVariableModel& model, const UnitVector& a,
                                    const UnitVector& b, IntegrationMode mode, RandomStream& rng,
                                    std::size_t mc_samples) {
  ConstraintReport r;
  r.id = constraint::kZeroAverage;
  const LambdaSpace& space = model.lambda_space();
  if (mode == IntegrationMode::Quadrature) {
    r.tolerance = kQuadratureTol;
    if (!space.has_quadrature()) {
      r.status = Status::NotApplicable;
      r.note = "lambda space has no quadrature";
      return r;
    }
    double mean = 0.0;
    double weight = 0.0;
    for (const WeightedPoint& node : space.quadrature()) {
      const auto c = excess_correlation(model, node.point, a, b);
      if (!c) continue;
      mean += node.weight * *c;
      weight += node.weight;
      ++r.samples_used;
    }
    mean /= weight;
    r.extremal_value = mean;
    r.note = "quadrature mean of C";
    if (std::abs(mean) >= kQuadratureTol) {
      r.status = Status::Fail;
      r.witness = Witness{{}, a, b, Outcome::Plus, Outcome::Plus, mean};
    }
    return r;
  }

  r.tolerance = kMcSigmas;
  Moments m;
  while (m.n < mc_samples) {
    const LambdaPoint l = space.sample(rng);
    const auto c = excess_correlation(model, l, a, b);
    if (c) m.add(*c);
  }
  r.samples_used = m.n;
  const double se = m.stderr_of_mean();
  r.extremal_value = m.mean;
  std::ostringstream note;
  note << "MC mean of C, stderr " << se << "; tolerance in standard errors";
  r.note = note.str();
  if (se > 1e-2) {
    r.status = Status::Inconclusive;
    return r;
  }
  const bool ok = se > 0.0 ? std::abs(m.mean) < kMcSigmas * se : std::abs(m.mean) <= kAlgebraicTol;
  if (!ok) {
    r.status = Status::Fail;
    r.witness = Witness{{}, a, b, Outcome::Plus, Outcome::Plus, m.mean};
  }
  return r;
}

ConstraintReport check_coincident_zero(const HiddenVariableModel& model, std::size_t n_a,
                                       RandomStream& rng, std::size_t n_lambda) {
  ConstraintReport r;
  r.id = constraint::kCoincidentZero;
  r.tolerance = kQuadratureTol;
  const LambdaSpace& space = model.lambda_space();
  std::vector<LambdaPoint> lambdas;
  if (space.discrete_scalars() && space.has_quadrature() && space.quadrature().size() <= 50'000) {
    for (const WeightedPoint& node : space.quadrature()) lambdas.push_back(node.point);
    r.note = "scanned at the support points of the discrete measure";
  } else {
    lambdas = draw_lambdas(model, n_lambda, rng);
    r.note = "scanned at sampled lambda";
  }
  double worst = -1.0;
  std::optional<Witness> at;
  for (std::size_t i = 0; i < n_a; ++i) {
    const UnitVector a = sample_uniform_sphere(rng);
    for (const UnitVector& b : {a, -a}) {
      for (const LambdaPoint& l : lambdas) {
        const auto c = excess_correlation(model, l, a, b);
        if (!c) continue;
        ++r.samples_used;
        if (std::abs(*c) > worst) {
          worst = std::abs(*c);
          at = make_witness(l, a, b, Outcome::Plus, Outcome::Plus, *c);
        }
      }
    }
  }
  r.extremal_value = std::max(worst, 0.0);
  if (worst >= kQuadratureTol) {
    r.status = Status::Fail;
    r.witness = at;
  }
  return r;
}

namespace {

struct Ray {
  UnitVector a;
  UnitVector direction;
};

std::vector<Ray> draw_rays(std::size_t n, RandomStream& rng) {
  std::vector<Ray> rays;
  for (std::size_t i = 0; i < n; ++i) {
    const UnitVector a = sample_uniform_sphere(rng);
    rays.push_back({a, direction_off(a, rng)});
  }
  return rays;
}

struct SlopeFit {
  double slope = 0.0;
  double residual = 0.0;
  std::size_t points = 0;
};

SlopeFit fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  SlopeFit fit;
  fit.points = x.size();
  if (x.size() < 2) return fit;
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  fit.slope = sxy / sxx;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - (my + fit.slope * (x[i] - mx));
    ss += e * e;
  }
  fit.residual = std::sqrt(ss / n);
  return fit;
}

constexpr std::size_t kFitPoints = 20;

double fit_offset(std::size_t k) {
  return std::pow(10.0, -5.0 + 3.0 * static_cast<double>(k) / static_cast<double>(kFitPoints - 1));
}

}  // namespace

ExponentEstimate estimate_exponents(const HiddenVariableModel& model, RandomStream& rng,
                                    std::size_t n_lambda, std::size_t n_rays) {
  ExponentEstimate est;
  if (!model.is_canonical()) {
    est.note = "direct-rule model has no Frobenius form";
    return est;
  }
  const std::vector<LambdaPoint> lambdas = draw_lambdas(model, n_lambda, rng);
  const std::vector<Ray> rays = draw_rays(n_rays, rng);

  auto fit_side = [&](double side) {
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < kFitPoints; ++k) {
      const double eps = fit_offset(k);
      double sum = 0.0;
      double offset_sum = 0.0;
      for (const Ray& ray : rays) {
        const UnitVector b = at_cosine(ray.a, ray.direction, side * (1.0 - eps));
        offset_sum += 1.0 - side * dot(ray.a, b);
        for (const LambdaPoint& l : lambdas) sum += std::abs(model.c(l, ray.a, b));
      }
      const double mean_abs = sum / static_cast<double>(rays.size() * lambdas.size());
      if (mean_abs > 1e-14) {
        xs.push_back(std::log(offset_sum / static_cast<double>(rays.size())));
        ys.push_back(std::log(mean_abs));
      }
    }
    return fit_slope(xs, ys);
  };

  const SlopeFit minus = fit_side(1.0);   // 1 - a.b -> 0
  const SlopeFit plus = fit_side(-1.0);   // 1 + a.b -> 0
  est.s_minus = minus.slope;
  est.s_plus = plus.slope;
  est.residual = std::max(minus.residual, plus.residual);
  if (minus.points < 5 || plus.points < 5) {
    est.note = "C below 1e-14 throughout the fit window";
    return est;
  }
  est.conclusive = true;
  return est;
}

ConstraintReport check_exponent_bound(const HiddenVariableModel& model, RandomStream& rng) {
  ConstraintReport r;
  r.id = constraint::kExponentBound;
  r.tolerance = kFitTolerance;
  if (!model.is_canonical()) {
    r.status = Status::NotApplicable;
    r.note = "direct-rule model";
    return r;
  }
  const ExponentEstimate est = estimate_exponents(model, rng);
  r.samples_used = 256 * 16 * kFitPoints * 2;
  std::ostringstream note;
  note << "fitted s+ = " << est.s_plus << ", s- = " << est.s_minus << ", residual " << est.residual;
  r.note = note.str();
  r.extremal_value = std::min(est.s_plus, est.s_minus);
  if (!est.conclusive) {
    r.status = Status::Inconclusive;
    r.note += "; " + est.note;
    return r;
  }
  if (est.residual > kFitResidualLimit) {
    r.status = Status::Inconclusive;
    r.note += "; residual too large for a power law (non-analytic C?)";
    return r;
  }
  if (r.extremal_value < 1.0 - kFitTolerance) {
    r.status = Status::Fail;
    // Witness: the ray point closest to the offending endpoint, valued by the exponent.
    RandomStream local = rng.derive(7);
    const UnitVector a = sample_uniform_sphere(local);
    const double side = est.s_minus <= est.s_plus ? 1.0 : -1.0;
    const UnitVector b = at_cosine(a, direction_off(a, local), side * (1.0 - fit_offset(0)));
    r.witness = Witness{model.lambda_space().sample(local), a, b, Outcome::Plus,
                        side > 0 ? Outcome::Plus : Outcome::Minus, r.extremal_value};
  }
  return r;
}

ConstraintReport check_endpoint_g_bound(const HiddenVariableModel& model, RandomStream& rng,
                                        std::size_t n_lambda, std::size_t n_rays) {
  ConstraintReport r;
  r.id = constraint::kEndpointGBound;
  r.tolerance = 1e-9;
  if (!model.is_canonical()) {
    r.status = Status::NotApplicable;
    r.note = "direct-rule model";
    return r;
  }
  const auto exps = known_exponents(model, rng);
  if (!exps) {
    r.status = Status::Inconclusive;
    r.note = "exponents could not be determined";
    return r;
  }
  const bool upper = is_one(exps->s_minus);  // bound on G(lambda, a, a)
  const bool lower = is_one(exps->s_plus);   // bound on G(lambda, a, -a)
  if (!upper && !lower) {
    r.status = Status::NotApplicable;
    r.note = "applies only when s+ = 1 or s- = 1";
    return r;
  }
  const std::vector<LambdaPoint> lambdas = draw_lambdas(model, n_lambda, rng);
  const std::vector<Ray> rays = draw_rays(n_rays, rng);
  double worst_excess = -1.0;
  std::optional<Witness> at;
  std::ostringstream note;
  note << "max |G| at coincident settings minus 2^-s";
  for (const double side : {1.0, -1.0}) {
    if ((side > 0 && !upper) || (side < 0 && !lower)) continue;
    const double limit = std::pow(2.0, -(side > 0 ? exps->s_plus : exps->s_minus));
    std::size_t nonzero = 0;
    std::size_t total = 0;
    for (const Ray& ray : rays) {
      const UnitVector b = at_cosine(ray.a, ray.direction, side * (1.0 - kEndpointProbe));
      const double t = dot(ray.a, b);
      for (const LambdaPoint& l : lambdas) {
        const double g = frobenius_g(model.c(l, ray.a, b), t, *exps);
        ++total;
        if (std::abs(g) > 1e-9) ++nonzero;
        if (std::abs(g) - limit > worst_excess) {
          worst_excess = std::abs(g) - limit;
          at = make_witness(l, ray.a, b, Outcome::Plus, side > 0 ? Outcome::Plus : Outcome::Minus, g);
        }
      }
    }
    r.samples_used += total;
    const double fraction = static_cast<double>(nonzero) / static_cast<double>(total);
    note << "; side " << (side > 0 ? "a" : "-a") << ": nonzero fraction " << fraction;
    if (fraction <= 0.01) {
      r.status = Status::Fail;
      r.note = note.str() + " (G vanishes at the endpoint: exponent is not the vanishing order)";
      r.extremal_value = fraction;
      const Ray& ray = rays.front();
      const UnitVector b = at_cosine(ray.a, ray.direction, side * (1.0 - kEndpointProbe));
      r.witness = make_witness(lambdas.front(), ray.a, b, Outcome::Plus, Outcome::Plus, fraction);
      return r;
    }
  }
  r.extremal_value = worst_excess;
  r.note = note.str();
  if (worst_excess > r.tolerance) {
    r.status = Status::Fail;
    r.witness = at;
  }
  return r;
}

ConstraintReport check_expansion(const HiddenVariableModel& model,
                                 const std::vector<double>& epsilons, RandomStream& rng,
                                 std::size_t n_lambda, std::size_t n_rays) {
  ConstraintReport r;
  r.id = constraint::kExpansion;
  r.tolerance = 10.0;
  if (!model.is_canonical()) {
    r.status = Status::NotApplicable;
    r.note = "direct-rule model";
    return r;
  }
  const auto exps = known_exponents(model, rng);
  if (!exps) {
    r.status = Status::Inconclusive;
    r.note = "exponents could not be determined";
    return r;
  }
  const bool upper = is_one(exps->s_minus);
  const bool lower = is_one(exps->s_plus);
  if (!upper && !lower) {
    r.status = Status::NotApplicable;
    r.note = "lowest-order form needs s+ = 1 or s- = 1";
    return r;
  }
  const std::vector<LambdaPoint> lambdas = draw_lambdas(model, n_lambda, rng);
  const std::vector<Ray> rays = draw_rays(n_rays, rng);

  // The endpoint value G(lambda, a, +-a) is only well defined when G depends
  // on b through a.b; probe with a second ray direction at fixed a.b.
  for (const double side : {1.0, -1.0}) {
    for (std::size_t i = 0; i < std::min<std::size_t>(rays.size(), 4); ++i) {
      const Ray& ray = rays[i];
      const UnitVector other = direction_off(ray.a, rng);
      const UnitVector b1 = at_cosine(ray.a, ray.direction, side * (1.0 - 1e-3));
      const UnitVector b2 = at_cosine(ray.a, other, side * (1.0 - 1e-3));
      for (std::size_t j = 0; j < std::min<std::size_t>(lambdas.size(), 16); ++j) {
        const double g1 = frobenius_g(model.c(lambdas[j], ray.a, b1), dot(ray.a, b1), *exps);
        const double g2 = frobenius_g(model.c(lambdas[j], ray.a, b2), dot(ray.a, b2), *exps);
        if (std::abs(g1 - g2) > 1e-9 * (1.0 + std::abs(g1))) {
          r.status = Status::NotApplicable;
          r.note = "G depends on the direction of b, not only on a.b; no single endpoint value";
          return r;
        }
      }
    }
  }

  double worst = -1.0;
  std::optional<Witness> at;
  for (const double side : {1.0, -1.0}) {
    if ((side > 0 && !upper) || (side < 0 && !lower)) continue;
    const double power = std::pow(2.0, side > 0 ? exps->s_plus : exps->s_minus);
    const Outcome tau = side > 0 ? Outcome::Plus : Outcome::Minus;
    for (const Ray& ray : rays) {
      const UnitVector b_lim = at_cosine(ray.a, ray.direction, side * (1.0 - kEndpointProbe));
      for (const double eps_nominal : epsilons) {
        const UnitVector b = at_cosine(ray.a, ray.direction, side * (1.0 - eps_nominal));
        const double t = dot(ray.a, b);
        const double eps = 1.0 - side * t;
        for (const LambdaPoint& l : lambdas) {
          const double g_end = frobenius_g(model.c(l, ray.a, b_lim), dot(ray.a, b_lim), *exps);
          const double exact = canonical_table(t, model.c(l, ray.a, b))(Outcome::Plus, tau);
          const double approx = eps / 4.0 * (1.0 + side * power * g_end);
          const double coefficient = std::abs(exact - approx) / (eps / 4.0) / eps;
          ++r.samples_used;
          if (coefficient > worst) {
            worst = coefficient;
            at = make_witness(l, ray.a, b, Outcome::Plus, tau, exact);
          }
        }
      }
    }
  }
  r.extremal_value = worst;
  r.note = "max |exact - lowest order| / (eps/4) / eps; must stay below 10";
  if (worst >= r.tolerance) {
    r.status = Status::Fail;
    r.witness = at;
  }
  return r;
}

ConstraintReport check_qm_reproduction(const HiddenVariableModel& model, std::size_t n_settings,
                                       IntegrationMode mode, RandomStream& rng,
                                       std::size_t mc_samples) {
  ConstraintReport r;
  r.id = constraint::kQmReproduction;
  const LambdaSpace& space = model.lambda_space();
  std::vector<ProbePair> pairs;
  for (std::size_t i = 0; i < n_settings; ++i) pairs.push_back(random_pair(rng, false));

  if (mode == IntegrationMode::Quadrature) {
    r.tolerance = 1e-9;
    if (!space.has_quadrature()) {
      r.status = Status::NotApplicable;
      r.note = "lambda space has no quadrature";
      return r;
    }
    double worst = -1.0;
    std::optional<Witness> at;
    for (const ProbePair& pair : pairs) {
      std::array<double, 4> avg{};
      double weight = 0.0;
      for (const WeightedPoint& node : space.quadrature()) {
        const auto table = model.table(node.point, pair.a, pair.b);
        if (!table) continue;
        for (std::size_t k = 0; k < 4; ++k) avg[k] += node.weight * table->entries()[k];
        weight += node.weight;
        ++r.samples_used;
      }
      const ProbabilityTable averaged({avg[0] / weight, avg[1] / weight, avg[2] / weight, avg[3] / weight});
      for (Outcome sigma : kOutcomes) {
        for (Outcome tau : kOutcomes) {
          const double dev = std::abs(averaged(sigma, tau) - qm_singlet_prob(sigma, tau, pair.a, pair.b));
          if (dev > worst) {
            worst = dev;
            at = Witness{{}, pair.a, pair.b, sigma, tau, averaged(sigma, tau)};
          }
        }
      }
    }
    r.extremal_value = worst;
    r.note = "max |quadrature average - singlet probability|";
    if (worst >= r.tolerance) {
      r.status = Status::Fail;
      r.witness = at;
    }
    return r;
  }

  r.tolerance = kMcSigmas;
  double worst = -1.0;
  double worst_dev = 0.0;
  std::optional<Witness> at;
  for (const ProbePair& pair : pairs) {
    std::array<Moments, 4> m;
    while (m[0].n < mc_samples) {
      const auto table = model.table(space.sample(rng), pair.a, pair.b);
      if (!table) continue;
      for (std::size_t k = 0; k < 4; ++k) m[k].add(table->entries()[k]);
    }
    r.samples_used += m[0].n;
    for (Outcome sigma : kOutcomes) {
      for (Outcome tau : kOutcomes) {
        const Moments& mk = m[ProbabilityTable::index(sigma, tau)];
        const double dev = std::abs(mk.mean - qm_singlet_prob(sigma, tau, pair.a, pair.b));
        const double se = mk.stderr_of_mean();
        const double z = se > 0.0 ? dev / se : (dev <= kAlgebraicTol ? 0.0 : INFINITY);
        if (z > worst) {
          worst = z;
          worst_dev = dev;
          at = Witness{{}, pair.a, pair.b, sigma, tau, mk.mean};
        }
      }
    }
  }
  r.extremal_value = worst;
  std::ostringstream note;
  note << "max z-score of MC average against the singlet (deviation " << worst_dev << ")";
  r.note = note.str();
  if (worst >= kMcSigmas) {
    r.status = Status::Fail;
    r.witness = at;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Suite

std::vector<ConstraintReport> run_full_suite(const HiddenVariableModel& model,
                                             const ValidatorConfig& config, std::uint64_t seed) {
  const IntegrationMode mode = config.mode.value_or(
      model.lambda_space().has_quadrature() ? IntegrationMode::Quadrature : IntegrationMode::MonteCarlo);

  using Check = std::function<ConstraintReport(RandomStream&)>;
  const std::vector<Check> checks = {
      [&](RandomStream& rng) { return check_normalization(model, config.n_lambda, config.n_settings, rng); },
      [&](RandomStream& rng) { return check_positivity(model, config.n_lambda, config.n_settings, rng, true); },
      [&](RandomStream& rng) { return check_half_bound(model, config.n_lambda, config.n_settings, rng); },
      [&](RandomStream& rng) {
        return check_marginal_triviality(model, config.n_lambda, config.n_settings, rng);
      },
      [&](RandomStream& rng) {
        // Worst of several setting pairs; a failing pair wins.
        ConstraintReport worst;
        bool have = false;
        for (std::size_t i = 0; i < config.n_zero_average_settings; ++i) {
          const UnitVector a = sample_uniform_sphere(rng);
          const UnitVector b = sample_uniform_sphere(rng);
          ConstraintReport rep = check_zero_average(model, a, b, mode, rng, config.mc_samples);
          const auto rank = [](Status s) {
            return s == Status::Fail ? 3 : s == Status::Inconclusive ? 2 : s == Status::NotApplicable ? 1 : 0;
          };
          const std::size_t used = (have ? worst.samples_used : 0) + rep.samples_used;
          if (!have || rank(rep.status) > rank(worst.status) ||
              (rank(rep.status) == rank(worst.status) &&
               std::abs(rep.extremal_value) > std::abs(worst.extremal_value))) {
            worst = std::move(rep);
          }
          worst.samples_used = used;
          have = true;
        }
        return worst;
      },
      [&](RandomStream& rng) { return check_coincident_zero(model, config.n_coincident, rng, config.n_lambda); },
      [&](RandomStream& rng) { return check_exponent_bound(model, rng); },
      [&](RandomStream& rng) { return check_endpoint_g_bound(model, rng); },
      [&](RandomStream& rng) { return check_expansion(model, config.expansion_epsilons, rng); },
      [&](RandomStream& rng) {
        return check_qm_reproduction(model, config.n_qm_settings, mode, rng, config.mc_samples);
      },
  };

  std::vector<ConstraintReport> reports(checks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < checks.size(); i = next++) {
      RandomStream rng(seed, i);
      reports[i] = checks[i](rng);
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(config.threads, checks.size()));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();
  return reports;
}

Status overall_status(const std::vector<ConstraintReport>& reports) {
  bool inconclusive = false;
  for (const ConstraintReport& r : reports) {
    if (r.status == Status::Fail) return Status::Fail;
    if (r.status == Status::Inconclusive) inconclusive = true;
  }
  return inconclusive ? Status::Inconclusive : Status::Pass;
}

namespace {

nlohmann::json vec_json(const UnitVector& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

nlohmann::json to_json(const Witness& w) {
  nlohmann::json vectors = nlohmann::json::array();
  for (const UnitVector& v : w.lambda.vectors) vectors.push_back(vec_json(v));
  return {
      {"lambda", {{"scalars", w.lambda.scalars}, {"vectors", vectors}, {"labels", w.lambda.labels}}},
      {"a", vec_json(w.a)},
      {"b", vec_json(w.b)},
      {"sigma", sign_of(w.sigma)},
      {"tau", sign_of(w.tau)},
      {"value", w.value},
  };
}

nlohmann::json to_json(const ConstraintReport& r) {
  return {
      {"constraint_id", r.id},
      {"status", to_string(r.status)},
      {"extremal_value", r.extremal_value},
      {"witness", r.witness ? to_json(*r.witness) : nlohmann::json(nullptr)},
      {"tolerance", r.tolerance},
      {"samples_used", r.samples_used},
      {"note", r.note},
  };
}

nlohmann::json suite_to_json(const std::string& model_name, std::uint64_t seed,
                             const std::vector<ConstraintReport>& reports) {
  nlohmann::json list = nlohmann::json::array();
  for (const ConstraintReport& r : reports) list.push_back(to_json(r));
  return {
      {"model", model_name},
      {"seed", seed},
      {"overall", to_string(overall_status(reports))},
      {"reports", list},
  };
}

}  // namespace hv
