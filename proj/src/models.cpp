#include "hvsinglet/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace hv {

Outcome outcome_from_int(int value) {
  if (value == 1) return Outcome::Plus;
  if (value == -1) return Outcome::Minus;
  throw std::invalid_argument("outcome must be +1 or -1, got " + std::to_string(value));
}

// ---------------------------------------------------------------------------
// LambdaSpace

LambdaSpace::LambdaSpace(LambdaShape shape, Sampler sampler,
                         std::optional<std::vector<WeightedPoint>> quadrature,
                         std::string description)
    : shape_(shape), sampler_(std::move(sampler)), description_(std::move(description)) {
  if (!sampler_) throw std::invalid_argument("LambdaSpace: sampler is required");
  if (quadrature) {
    if (quadrature->empty()) throw std::invalid_argument("LambdaSpace: empty quadrature");
    double total = 0.0;
    for (const WeightedPoint& node : *quadrature) {
      if (!(node.weight > 0.0)) throw std::invalid_argument("LambdaSpace: non-positive quadrature weight");
      if (node.point.shape() != shape_) throw std::invalid_argument("LambdaSpace: quadrature node shape mismatch");
      total += node.weight;
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw std::invalid_argument("LambdaSpace: quadrature weights do not sum to 1");
    }
    quadrature_ = std::make_shared<const std::vector<WeightedPoint>>(std::move(*quadrature));
  }
}

LambdaPoint LambdaSpace::sample(RandomStream& rng) const { return sampler_(rng); }

const std::vector<WeightedPoint>& LambdaSpace::quadrature() const {
  if (!quadrature_) throw std::logic_error("LambdaSpace '" + description_ + "' has no quadrature");
  return *quadrature_;
}

ScalarMeasure ScalarMeasure::two_point(double gamma, double plus_weight) {
  ScalarMeasure m;
  m.kind = Kind::TwoPoint;
  m.gamma = gamma;
  m.plus_weight = plus_weight;
  return m;
}

ScalarMeasure ScalarMeasure::uniform(double gamma) {
  ScalarMeasure m;
  m.kind = Kind::Uniform;
  m.gamma = gamma;
  return m;
}

double ScalarMeasure::mean() const {
  return kind == Kind::TwoPoint ? gamma * (2.0 * plus_weight - 1.0) : 0.0;
}

namespace {

void validate_measure(const ScalarMeasure& m) {
  if (!(std::isfinite(m.gamma) && m.gamma > 0.0)) {
    throw std::invalid_argument("scalar measure: gamma must be positive and finite");
  }
  if (m.kind == ScalarMeasure::Kind::TwoPoint && !(m.plus_weight > 0.0 && m.plus_weight < 1.0)) {
    throw std::invalid_argument("scalar measure: two-point weight must lie in (0, 1)");
  }
  if (m.kind == ScalarMeasure::Kind::Uniform && m.uniform_nodes == 0) {
    throw std::invalid_argument("scalar measure: uniform quadrature needs at least one node");
  }
}

std::vector<std::pair<double, double>> scalar_rule(const ScalarMeasure& m) {
  if (m.kind == ScalarMeasure::Kind::TwoPoint) {
    return {{m.gamma, m.plus_weight}, {-m.gamma, 1.0 - m.plus_weight}};
  }
  const GaussLegendre rule = gauss_legendre(m.uniform_nodes);
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    out.emplace_back(m.gamma * rule.nodes[i], 0.5 * rule.weights[i]);
  }
  return out;
}

double sample_scalar(const ScalarMeasure& m, RandomStream& rng) {
  if (m.kind == ScalarMeasure::Kind::TwoPoint) {
    return rng.uniform01() < m.plus_weight ? m.gamma : -m.gamma;
  }
  return m.gamma * (2.0 * rng.uniform01() - 1.0);
}

std::string describe(const ScalarMeasure& m) {
  std::ostringstream os;
  if (m.kind == ScalarMeasure::Kind::TwoPoint) {
    os << "two_point(gamma=" << m.gamma << ", w+=" << m.plus_weight << ")";
  } else {
    os << "uniform(gamma=" << m.gamma << ")";
  }
  return os.str();
}

std::vector<WeightedPoint> normalized(std::vector<WeightedPoint> nodes) {
  double total = 0.0;
  for (const WeightedPoint& n : nodes) total += n.weight;
  for (WeightedPoint& n : nodes) n.weight /= total;
  return nodes;
}

}  // namespace

LambdaSpace scalar_lambda_space(const ScalarMeasure& measure) {
  validate_measure(measure);
  std::vector<WeightedPoint> nodes;
  for (const auto& [value, weight] : scalar_rule(measure)) {
    nodes.push_back({LambdaPoint{{value}, {}, {}}, weight});
  }
  LambdaSpace space(
      {1, 0, 0}, [measure](RandomStream& rng) { return LambdaPoint{{sample_scalar(measure, rng)}, {}, {}}; },
      normalized(std::move(nodes)), describe(measure));
  space.set_discrete_scalars(measure.kind == ScalarMeasure::Kind::TwoPoint);
  return space;
}

LambdaSpace scalar_sphere_lambda_space(const ScalarMeasure& measure, std::size_t n_theta,
                                       std::size_t n_phi) {
  validate_measure(measure);
  const SphereGrid grid = make_sphere_grid(n_theta, n_phi);
  std::vector<WeightedPoint> nodes;
  const auto rule = scalar_rule(measure);
  nodes.reserve(rule.size() * grid.nodes.size());
  for (const auto& [value, weight] : rule) {
    for (std::size_t k = 0; k < grid.nodes.size(); ++k) {
      nodes.push_back({LambdaPoint{{value}, {grid.nodes[k]}, {}}, weight * grid.weights[k]});
    }
  }
  LambdaSpace space(
      {1, 1, 0},
      [measure](RandomStream& rng) {
        const double g = sample_scalar(measure, rng);
        return LambdaPoint{{g}, {sample_uniform_sphere(rng)}, {}};
      },
      normalized(std::move(nodes)), describe(measure) + " x uniform_sphere");
  space.set_discrete_scalars(measure.kind == ScalarMeasure::Kind::TwoPoint);
  return space;
}

LambdaSpace sphere_pair_lambda_space() {
  return LambdaSpace(
      {0, 2, 0},
      [](RandomStream& rng) {
        const UnitVector u = sample_uniform_sphere(rng);
        const UnitVector v = sample_uniform_sphere(rng);
        return LambdaPoint{{}, {u, v}, {}};
      },
      std::nullopt, "uniform_sphere x uniform_sphere");
}

// ---------------------------------------------------------------------------
// Tables

double ProbabilityTable::min_entry() const { return *std::min_element(p_.begin(), p_.end()); }
double ProbabilityTable::max_entry() const { return *std::max_element(p_.begin(), p_.end()); }

namespace {

std::string violation_message(const Witness& w) {
  std::ostringstream os;
  os << "negative probability " << w.value << " for (sigma, tau) = (" << sign_of(w.sigma) << ", "
     << sign_of(w.tau) << ") at a.b = " << dot(w.a, w.b);
  return os.str();
}

}  // namespace

ConstraintViolation::ConstraintViolation(Witness witness)
    : std::runtime_error(violation_message(witness)), witness_(std::move(witness)) {}

// ---------------------------------------------------------------------------
// Models

HiddenVariableModel::HiddenVariableModel(std::string name, LambdaSpace space, CanonicalRule rule)
    : name_(std::move(name)), space_(std::move(space)), rule_(std::move(rule)) {
  if (!std::get<CanonicalRule>(rule_).c.evaluate) {
    throw std::invalid_argument("HiddenVariableModel: C evaluator is required");
  }
}

HiddenVariableModel::HiddenVariableModel(std::string name, LambdaSpace space, DirectRule rule)
    : name_(std::move(name)), space_(std::move(space)), rule_(std::move(rule)) {
  if (!std::get<DirectRule>(rule_).table) {
    throw std::invalid_argument("HiddenVariableModel: table evaluator is required");
  }
}

const CFunction& HiddenVariableModel::c_function() const {
  if (const auto* rule = std::get_if<CanonicalRule>(&rule_)) return rule->c;
  throw std::logic_error("model '" + name_ + "' has a direct probability rule, not a C function");
}

std::optional<ProbabilityTable> HiddenVariableModel::table(const LambdaPoint& lambda,
                                                           const UnitVector& a,
                                                           const UnitVector& b) const {
  if (const auto* rule = std::get_if<CanonicalRule>(&rule_)) {
    return canonical_table(dot(a, b), rule->c.evaluate(lambda, a, b));
  }
  return std::get<DirectRule>(rule_).table(lambda, a, b);
}

double qm_singlet_prob(Outcome sigma, Outcome tau, const UnitVector& a, const UnitVector& b) {
  return (1.0 - sign_of(sigma) * sign_of(tau) * dot(a, b)) / 4.0;
}

ProbabilityTable qm_singlet_table(double t) {
  return ProbabilityTable({(1.0 - t) / 4.0, (1.0 + t) / 4.0, (1.0 + t) / 4.0, (1.0 - t) / 4.0});
}

ProbabilityTable canonical_table(double t, double c) {
  const double k = t - c;
  return ProbabilityTable({(1.0 - k) / 4.0, (1.0 + k) / 4.0, (1.0 + k) / 4.0, (1.0 - k) / 4.0});
}

ProbabilityTable canonical_prob(const HiddenVariableModel& model, const LambdaPoint& lambda,
                                const UnitVector& a, const UnitVector& b) {
  const ProbabilityTable table = canonical_table(dot(a, b), model.c(lambda, a, b));
  Witness worst{lambda, a, b, Outcome::Plus, Outcome::Plus, table.entries()[0]};
  for (Outcome sigma : kOutcomes) {
    for (Outcome tau : kOutcomes) {
      if (table(sigma, tau) < worst.value) {
        worst.sigma = sigma;
        worst.tau = tau;
        worst.value = table(sigma, tau);
      }
    }
  }
  if (worst.value < -kAlgebraicTol) throw ConstraintViolation(std::move(worst));
  return table;
}

double hv_correlator(const HiddenVariableModel& model, const LambdaPoint& lambda,
                     const UnitVector& a, const UnitVector& b) {
  return -dot(a, b) + model.c(lambda, a, b);
}

std::optional<double> excess_correlation(const HiddenVariableModel& model,
                                         const LambdaPoint& lambda, const UnitVector& a,
                                         const UnitVector& b) {
  if (model.is_canonical()) return model.c(lambda, a, b);
  const auto table = model.table(lambda, a, b);
  if (!table) return std::nullopt;
  return table->correlator() + dot(a, b);
}

double family1_c(double g, const UnitVector& a, const UnitVector& b) {
  const double t = dot(a, b);
  return (1.0 - t) * (1.0 + t) * g;
}

double family2_c(double g, const UnitVector& u, const UnitVector& a, const UnitVector& b) {
  const double au = dot(a, u);
  const double bu = dot(b, u);
  const double bracket = au * au - bu * bu;
  return -dot(a, b) * bracket * bracket * g;
}

double wrongtrial_c(double g, const UnitVector& a, const UnitVector& b) {
  const double t = dot(a, b);
  return std::sqrt((1.0 - t) * (1.0 + t)) * g;
}

namespace {

// sgn with a dead zone; 0 marks the measure-zero set.
int strict_sign(double x) {
  if (x > 1e-12) return 1;
  if (x < -1e-12) return -1;
  return 0;
}

}  // namespace

std::optional<ProbabilityTable> cerf_prob(const UnitVector& u, const UnitVector& v,
                                          const UnitVector& a, const UnitVector& b) {
  const double ub = u.x() * b.x() + u.y() * b.y() + u.z() * b.z();
  const double vb = v.x() * b.x() + v.y() * b.y() + v.z() * b.z();
  const int ua = strict_sign(dot(u, a));
  const int va = strict_sign(dot(v, a));
  const int np = strict_sign(ub + vb);
  const int nm = strict_sign(ub - vb);
  if (ua == 0 || va == 0 || np == 0 || nm == 0) return std::nullopt;
  const int x = ua * va;
  const int y = np * nm;
  // (1 + x + y - xy) / 2 is +-1 for x, y in {-1, +1}.
  const int k = ua * np * ((1 + x + y - x * y) / 2);
  const double same = k > 0 ? 0.0 : 0.5;
  const double opposite = 0.5 - same;
  return ProbabilityTable({same, opposite, opposite, same});
}

HiddenVariableModel make_qm_reference() {
  return HiddenVariableModel(
      "qm", scalar_lambda_space(ScalarMeasure::two_point(1.0)),
      CanonicalRule{CFunction{[](const LambdaPoint&, const UnitVector&, const UnitVector&) { return 0.0; },
                              std::nullopt}});
}

HiddenVariableModel make_family1(const ScalarMeasure& measure) {
  if (!(measure.max_abs() < 0.5)) {
    throw std::invalid_argument("family1: requires |g| < 1/2 (gamma < 0.5)");
  }
  return HiddenVariableModel(
      "family1", scalar_lambda_space(measure),
      CanonicalRule{CFunction{[](const LambdaPoint& l, const UnitVector& a, const UnitVector& b) {
                                return family1_c(l.scalars[0], a, b);
                              },
                              Exponents{1.0, 1.0}}});
}

HiddenVariableModel make_family2(const ScalarMeasure& measure, std::size_t n_theta,
                                 std::size_t n_phi) {
  if (!(measure.max_abs() <= 0.5)) {
    throw std::invalid_argument("family2: requires |g| <= 1/2 (gamma <= 0.5)");
  }
  return HiddenVariableModel(
      "family2", scalar_sphere_lambda_space(measure, n_theta, n_phi),
      CanonicalRule{CFunction{[](const LambdaPoint& l, const UnitVector& a, const UnitVector& b) {
                                return family2_c(l.scalars[0], l.vectors[0], a, b);
                              },
                              Exponents{1.0, 1.0}}});
}

HiddenVariableModel make_wrongtrial(const ScalarMeasure& measure) {
  return HiddenVariableModel(
      "wrongtrial", scalar_lambda_space(measure),
      CanonicalRule{CFunction{[](const LambdaPoint& l, const UnitVector& a, const UnitVector& b) {
                                return wrongtrial_c(l.scalars[0], a, b);
                              },
                              Exponents{0.5, 0.5}}});
}

HiddenVariableModel make_cerf() {
  return HiddenVariableModel(
      "cerf", sphere_pair_lambda_space(),
      DirectRule{[](const LambdaPoint& l, const UnitVector& a, const UnitVector& b) {
        return cerf_prob(l.vectors[0], l.vectors[1], a, b);
      }});
}

}  // namespace hv
