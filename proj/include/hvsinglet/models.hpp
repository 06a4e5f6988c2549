#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "hvsinglet/geometry.hpp"
#include "hvsinglet/random.hpp"

namespace hv {

/// Measurement outcome of one wing.
enum class Outcome : int { Minus = -1, Plus = 1 };

inline int sign_of(Outcome o) { return static_cast<int>(o); }
inline constexpr std::array<Outcome, 2> kOutcomes = {Outcome::Plus, Outcome::Minus};

/// Outcome from an integer; throws std::invalid_argument unless value is +-1.
Outcome outcome_from_int(int value);

// ---------------------------------------------------------------------------
// Hidden variables

struct LambdaShape {
  std::size_t scalars = 0;
  std::size_t vectors = 0;
  std::size_t labels = 0;

  friend bool operator==(const LambdaShape&, const LambdaShape&) = default;
};

/// One hidden-variable value: scalars, unit vectors and discrete labels.
struct LambdaPoint {
  std::vector<double> scalars;
  std::vector<UnitVector> vectors;
  std::vector<int> labels;

  LambdaShape shape() const { return {scalars.size(), vectors.size(), labels.size()}; }
};

struct WeightedPoint {
  LambdaPoint point;
  double weight;
};

/// The measure over hidden variables: a sampler and, optionally, a finite
/// quadrature (nodes with positive weights summing to one).
///
/// No detector setting is ever passed to the sampler, so every model built on
/// a LambdaSpace has a setting-independent measure.
class LambdaSpace {
 public:
  using Sampler = std::function<LambdaPoint(RandomStream&)>;

  LambdaSpace(LambdaShape shape, Sampler sampler,
              std::optional<std::vector<WeightedPoint>> quadrature, std::string description);

  const LambdaShape& shape() const { return shape_; }
  const std::string& description() const { return description_; }

  LambdaPoint sample(RandomStream& rng) const;

  bool has_quadrature() const { return quadrature_ != nullptr; }
  /// Throws std::logic_error when no quadrature is attached.
  const std::vector<WeightedPoint>& quadrature() const;

  /// True when the scalar measure is discrete (quadrature nodes are the
  /// support of the measure rather than an approximation to it).
  bool discrete_scalars() const { return discrete_scalars_; }
  LambdaSpace& set_discrete_scalars(bool discrete) {
    discrete_scalars_ = discrete;
    return *this;
  }

 private:
  LambdaShape shape_;
  Sampler sampler_;
  std::shared_ptr<const std::vector<WeightedPoint>> quadrature_;
  std::string description_;
  bool discrete_scalars_ = false;
};

/// Distribution of the scalar hidden variable g.
struct ScalarMeasure {
  enum class Kind { TwoPoint, Uniform };

  Kind kind = Kind::TwoPoint;
  double gamma = 0.4;
  /// Weight of +gamma under the two-point measure (0.5 gives zero mean).
  double plus_weight = 0.5;
  /// Gauss-Legendre order used as the quadrature of the uniform measure.
  std::size_t uniform_nodes = 16;

  static ScalarMeasure two_point(double gamma, double plus_weight = 0.5);
  static ScalarMeasure uniform(double gamma);

  double max_abs() const { return gamma; }
  double mean() const;
};

/// lambda = (g): one scalar.
LambdaSpace scalar_lambda_space(const ScalarMeasure& measure);
/// lambda = (g, u): one scalar and one unit vector uniform on the sphere.
/// Quadrature is the scalar rule times make_sphere_grid(n_theta, n_phi).
LambdaSpace scalar_sphere_lambda_space(const ScalarMeasure& measure,
                                       std::size_t n_theta = kDefaultGridTheta,
                                       std::size_t n_phi = kDefaultGridPhi);
/// lambda = (u, v): two independent unit vectors, uniform. Sampler only.
LambdaSpace sphere_pair_lambda_space();

// ---------------------------------------------------------------------------
// Probability tables

/// P(sigma, tau | lambda, a, b) stored in the order (++, +-, -+, --).
class ProbabilityTable {
 public:
  ProbabilityTable() = default;
  explicit ProbabilityTable(std::array<double, 4> entries) : p_(entries) {}

  static std::size_t index(Outcome sigma, Outcome tau) {
    return (sigma == Outcome::Plus ? 0u : 2u) + (tau == Outcome::Plus ? 0u : 1u);
  }

  double operator()(Outcome sigma, Outcome tau) const { return p_[index(sigma, tau)]; }
  double& operator()(Outcome sigma, Outcome tau) { return p_[index(sigma, tau)]; }

  const std::array<double, 4>& entries() const { return p_; }

  double sum() const { return p_[0] + p_[1] + p_[2] + p_[3]; }
  double min_entry() const;
  double max_entry() const;
  /// sum over tau of p(sigma, tau)
  double marginal_first(Outcome sigma) const { return (*this)(sigma, Outcome::Plus) + (*this)(sigma, Outcome::Minus); }
  /// sum over sigma of p(sigma, tau)
  double marginal_second(Outcome tau) const { return (*this)(Outcome::Plus, tau) + (*this)(Outcome::Minus, tau); }
  /// sum of sigma * tau * p(sigma, tau)
  double correlator() const { return p_[0] - p_[1] - p_[2] + p_[3]; }

  friend bool operator==(const ProbabilityTable&, const ProbabilityTable&) = default;

 private:
  std::array<double, 4> p_{};
};

inline constexpr double kAlgebraicTol = 1e-12;

/// Concrete counterexample to a constraint.
struct Witness {
  LambdaPoint lambda;
  UnitVector a = UnitVector::e_z();
  UnitVector b = UnitVector::e_z();
  Outcome sigma = Outcome::Plus;
  Outcome tau = Outcome::Plus;
  double value = 0.0;
};

/// Raised by canonical_prob when a table entry is negative beyond tolerance.
class ConstraintViolation : public std::runtime_error {
 public:
  explicit ConstraintViolation(Witness witness);
  const Witness& witness() const { return witness_; }

 private:
  Witness witness_;
};

// ---------------------------------------------------------------------------
// Models

struct Exponents {
  double s_plus;   // power of (1 + a.b)
  double s_minus;  // power of (1 - a.b)
};

/// Excess-correlation function C(lambda, a, b) with optional declared
/// Frobenius exponents (nullopt for black-box functions).
struct CFunction {
  using Evaluator = std::function<double(const LambdaPoint&, const UnitVector&, const UnitVector&)>;

  Evaluator evaluate;
  std::optional<Exponents> exponents;
};

struct CanonicalRule {
  CFunction c;
};

/// Table given directly; nullopt marks a measure-zero ambiguity at this point.
struct DirectRule {
  std::function<std::optional<ProbabilityTable>(const LambdaPoint&, const UnitVector&,
                                                 const UnitVector&)>
      table;
};

class HiddenVariableModel {
 public:
  HiddenVariableModel(std::string name, LambdaSpace space, CanonicalRule rule);
  HiddenVariableModel(std::string name, LambdaSpace space, DirectRule rule);

  const std::string& name() const { return name_; }
  const LambdaSpace& lambda_space() const { return space_; }

  bool is_canonical() const { return std::holds_alternative<CanonicalRule>(rule_); }
  /// Throws std::logic_error for direct-rule models.
  const CFunction& c_function() const;

  double c(const LambdaPoint& lambda, const UnitVector& a, const UnitVector& b) const {
    return c_function().evaluate(lambda, a, b);
  }

  /// Unchecked table. Canonical models always return a value; direct models
  /// return nullopt on their measure-zero ambiguity set.
  std::optional<ProbabilityTable> table(const LambdaPoint& lambda, const UnitVector& a,
                                        const UnitVector& b) const;

 private:
  std::string name_;
  LambdaSpace space_;
  std::variant<CanonicalRule, DirectRule> rule_;
};

/// (1 - sigma tau a.b) / 4
double qm_singlet_prob(Outcome sigma, Outcome tau, const UnitVector& a, const UnitVector& b);
ProbabilityTable qm_singlet_table(double a_dot_b);

/// p(sigma, tau) = (1 - sigma tau (a.b - C)) / 4, unchecked.
ProbabilityTable canonical_table(double a_dot_b, double c_value);

/// Canonical table for `model`; throws ConstraintViolation carrying the most
/// negative entry when any entry is below -1e-12, std::logic_error for
/// direct-rule models.
ProbabilityTable canonical_prob(const HiddenVariableModel& model, const LambdaPoint& lambda,
                                const UnitVector& a, const UnitVector& b);

/// Fixed-lambda correlator -a.b + C(lambda, a, b).
double hv_correlator(const HiddenVariableModel& model, const LambdaPoint& lambda,
                     const UnitVector& a, const UnitVector& b);

/// C(lambda, a, b) for either rule. For direct models it is recovered from
/// the table as correlator + a.b. nullopt on the measure-zero set.
std::optional<double> excess_correlation(const HiddenVariableModel& model,
                                         const LambdaPoint& lambda, const UnitVector& a,
                                         const UnitVector& b);

// Excess-correlation functions of the built-in families. g is the scalar
// hidden variable.
double family1_c(double g, const UnitVector& a, const UnitVector& b);
double family2_c(double g, const UnitVector& u, const UnitVector& a, const UnitVector& b);
double wrongtrial_c(double g, const UnitVector& a, const UnitVector& b);

/// Cerf model over two uniform unit vectors. Every entry is 0 or
/// 1/2. Returns nullopt when any sign argument is within 1e-12 of zero.
std::optional<ProbabilityTable> cerf_prob(const UnitVector& u, const UnitVector& v,
                                          const UnitVector& a, const UnitVector& b);

/// C = 0: reproduces the singlet at every lambda.
HiddenVariableModel make_qm_reference();
/// C = (1 - (a.b)^2) g. Requires |g| < 1/2 on the support.
HiddenVariableModel make_family1(const ScalarMeasure& measure);
/// C = -(a.b) ((a.u)^2 - (b.u)^2)^2 g. Requires |g| <= 1/2.
HiddenVariableModel make_family2(const ScalarMeasure& measure,
                                 std::size_t n_theta = kDefaultGridTheta,
                                 std::size_t n_phi = kDefaultGridPhi);
/// C = sqrt(1 - (a.b)^2) g: inadmissible, produces negative probabilities.
HiddenVariableModel make_wrongtrial(const ScalarMeasure& measure);
HiddenVariableModel make_cerf();

}  // namespace hv
