#include "hvsinglet/recipe.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <stdexcept>

namespace hv {

double recipe_bound(double s) {
  if (!(std::isfinite(s) && s >= 1.0)) {
    throw std::invalid_argument("recipe_bound: s must be >= 1");
  }
  const double tail = s == 1.0 ? 1.0 : std::pow(s - 1.0, s - 1.0);
  return std::pow(s - 0.5, 2.0 * s - 1.0) / (std::pow(s, s) * tail);
}

namespace {

// Mean of f at fixed settings as a function of t = a.b, interpolated through
// Chebyshev points of the second kind. Exact for polynomial dependence on t
// up to degree kChebyshevDegree.
constexpr std::size_t kChebyshevDegree = 16;

class SettingMean {
 public:
  template <typename MeanAt>
  explicit SettingMean(MeanAt&& mean_at) {
    for (std::size_t k = 0; k <= kChebyshevDegree; ++k) {
      const double t = std::cos(std::numbers::pi * static_cast<double>(k) / kChebyshevDegree);
      double w = (k % 2 == 0) ? 1.0 : -1.0;
      if (k == 0 || k == kChebyshevDegree) w *= 0.5;
      nodes_.push_back(t);
      weights_.push_back(w);
      values_.push_back(mean_at(t));
      if (!std::isfinite(values_.back())) {
        throw std::domain_error("recipe: the mean of f is not finite");
      }
    }
  }

  double operator()(double t) const {
    double num = 0.0;
    double den = 0.0;
    for (std::size_t k = 0; k < nodes_.size(); ++k) {
      const double diff = t - nodes_[k];
      if (diff == 0.0) return values_[k];
      const double c = weights_[k] / diff;
      num += c * values_[k];
      den += c;
    }
    return num / den;
  }

 private:
  std::vector<double> nodes_;
  std::vector<double> weights_;
  std::vector<double> values_;
};

double quadrature_mean(const RecipeFunction& f, const LambdaSpace& space, const UnitVector& a,
                       const UnitVector& b) {
  double sum = 0.0;
  for (const WeightedPoint& node : space.quadrature()) sum += node.weight * f.evaluate(node.point, a, b);
  return sum;
}

struct SearchPoint {
  LambdaPoint lambda;
  UnitVector a;
  UnitVector b;
  double g;
};

UnitVector jitter(const UnitVector& v, double angle, RandomStream& rng) {
  for (;;) {
    const UnitVector dir = sample_uniform_sphere(rng);
    if (std::abs(dot(dir, v)) < 0.999) return at_cosine(v, dir, std::cos(angle));
  }
}

// Hill climbing around the best sampled point. `sign` = +1 for sup, -1 for inf.
template <typename GFunc>
SearchPoint refine(SearchPoint best, double sign, const GFunc& g, bool move_scalars,
                   double scalar_lo, double scalar_hi, std::size_t iterations,
                   RandomStream& rng) {
  double step = 0.2;
  for (std::size_t it = 0; it < iterations; ++it) {
    SearchPoint trial = best;
    trial.a = jitter(best.a, step, rng);
    trial.b = jitter(best.b, step, rng);
    for (UnitVector& v : trial.lambda.vectors) v = jitter(v, step, rng);
    if (move_scalars) {
      for (double& x : trial.lambda.scalars) {
        x = std::clamp(x + step * (scalar_hi - scalar_lo) * (rng.uniform01() - 0.5), scalar_lo,
                       scalar_hi);
      }
    }
    trial.g = g(trial.lambda, trial.a, trial.b);
    if (sign * trial.g > sign * best.g) {
      best = std::move(trial);
    } else {
      step *= 0.99;
    }
  }
  return best;
}

}  // namespace

RecipeModel build_recipe_model(const RecipeInput& input, const RecipeOptions& options) {
  const double s = input.s;
  const double bound = recipe_bound(s);
  const RecipeFunction& f = input.f;
  const LambdaSpace& space = input.lambda_space;
  if (!f.evaluate) throw std::invalid_argument("recipe: f is required");
  if (!(f.bound > 0.0 && std::isfinite(f.bound))) {
    throw std::invalid_argument("recipe: f needs a positive finite declared bound");
  }

  const RandomStream root(options.seed, 0x5EC1BE);
  const UnitVector frame_a = UnitVector::e_z();
  const UnitVector frame_dir = UnitVector::e_x();

  std::shared_ptr<const SettingMean> mean;
  if (space.has_quadrature()) {
    mean = std::make_shared<const SettingMean>([&](double t) {
      return quadrature_mean(f, space, frame_a, at_cosine(frame_a, frame_dir, t));
    });
    // The tabulation assumes the mean depends on the settings only through a.b.
    RandomStream check = root.derive(1);
    for (int i = 0; i < 3; ++i) {
      const UnitVector a = sample_uniform_sphere(check);
      const UnitVector b = sample_uniform_sphere(check);
      const double direct = quadrature_mean(f, space, a, b);
      if (std::abs(direct - (*mean)(dot(a, b))) > 1e-9 * std::max(1.0, f.bound)) {
        throw std::domain_error("recipe: mean of f depends on more than a.b; f must be rotation invariant");
      }
    }
  } else {
    // Common random numbers across the nodes keep the tabulated curve smooth.
    std::vector<LambdaPoint> draws;
    RandomStream rng = root.derive(2);
    draws.reserve(options.mean_samples);
    for (std::size_t i = 0; i < options.mean_samples; ++i) draws.push_back(space.sample(rng));
    mean = std::make_shared<const SettingMean>([&](double t) {
      const UnitVector b = at_cosine(frame_a, frame_dir, t);
      double sum = 0.0;
      for (const LambdaPoint& l : draws) sum += f.evaluate(l, frame_a, b);
      return sum / static_cast<double>(draws.size());
    });
  }

  auto g = [f, mean](const LambdaPoint& l, const UnitVector& a, const UnitVector& b) {
    return f.evaluate(l, a, b) - (*mean)(dot(a, b));
  };

  double sup_g = 0.0;
  double inf_g = 0.0;
  double scale = 1.0;
  if (options.fixed_scale) {
    scale = *options.fixed_scale;
    if (!(scale > 0.0 && std::isfinite(scale))) throw std::invalid_argument("recipe: scale must be positive");
  } else {
    RandomStream rng = root.derive(3);
    std::optional<SearchPoint> best_hi;
    std::optional<SearchPoint> best_lo;
    double scalar_lo = 0.0;
    double scalar_hi = 0.0;
    bool first = true;
    for (std::size_t i = 0; i < options.search_samples; ++i) {
      LambdaPoint l = space.sample(rng);
      const UnitVector a = sample_uniform_sphere(rng);
      const UnitVector b = sample_uniform_sphere(rng);
      const double fv = f.evaluate(l, a, b);
      if (!std::isfinite(fv) || std::abs(fv) > f.bound * (1.0 + 1e-12)) {
        throw std::domain_error("recipe: f exceeds its declared bound " + std::to_string(f.bound));
      }
      for (double x : l.scalars) {
        scalar_lo = first ? x : std::min(scalar_lo, x);
        scalar_hi = first ? x : std::max(scalar_hi, x);
        first = false;
      }
      const double gv = fv - (*mean)(dot(a, b));
      if (!best_hi || gv > best_hi->g) best_hi = SearchPoint{l, a, b, gv};
      if (!best_lo || gv < best_lo->g) best_lo = SearchPoint{std::move(l), a, b, gv};
    }
    if (!best_hi) throw std::invalid_argument("recipe: search_samples must be positive");
    const bool move_scalars = !space.discrete_scalars() && scalar_hi > scalar_lo;
    sup_g = refine(*best_hi, 1.0, g, move_scalars, scalar_lo, scalar_hi,
                   options.refine_iterations, rng).g;
    inf_g = refine(*best_lo, -1.0, g, move_scalars, scalar_lo, scalar_hi,
                   options.refine_iterations, rng).g;
    const double noise = 1e-12 * std::max(1.0, f.bound);
    if (!(sup_g > noise && inf_g < -noise)) {
      throw std::domain_error("recipe: g = f - mean(f) vanishes identically; f must depend on lambda");
    }
    const double extent = std::max(std::abs(sup_g), std::abs(inf_g));
    if (extent > bound) scale = options.safety_factor * bound / extent;
  }

  CFunction c{[g, s, scale](const LambdaPoint& l, const UnitVector& a, const UnitVector& b) {
                const double t = dot(a, b);
                const double base = (1.0 - t) * (1.0 + t);
                const double prefactor = s == 1.0 ? base : std::pow(base, s);
                return prefactor * scale * g(l, a, b);
              },
              Exponents{s, s}};
  HiddenVariableModel model("recipe:" + f.name, space, CanonicalRule{std::move(c)});
  return RecipeModel{std::move(model), s, bound, sup_g, inf_g, scale};
}

namespace {

struct RegistryEntry {
  const char* name;
  const char* formula;
  double (*evaluate)(const LambdaPoint&, const UnitVector&, const UnitVector&);
  double (*bound)(double gamma);
};

const RegistryEntry kRegistry[] = {
    {"poly1", "x",
     [](const LambdaPoint& l, const UnitVector&, const UnitVector&) { return l.scalars[0]; },
     [](double gamma) { return gamma; }},
    {"poly2", "x * (a.b)",
     [](const LambdaPoint& l, const UnitVector& a, const UnitVector& b) {
       return l.scalars[0] * dot(a, b);
     },
     [](double gamma) { return gamma; }},
    {"poly3", "(a.u) * (b.u)",
     [](const LambdaPoint& l, const UnitVector& a, const UnitVector& b) {
       return dot(a, l.vectors[0]) * dot(b, l.vectors[0]);
     },
     [](double) { return 1.0; }},
    {"poly4", "x * ((a.u)^2 - (b.u)^2) + (a.b) * (a.u) * (b.u)",
     [](const LambdaPoint& l, const UnitVector& a, const UnitVector& b) {
       const double au = dot(a, l.vectors[0]);
       const double bu = dot(b, l.vectors[0]);
       return l.scalars[0] * (au * au - bu * bu) + dot(a, b) * au * bu;
     },
     [](double gamma) { return gamma + 1.0; }},
};

}  // namespace

RecipeFunction find_recipe_function(const std::string& name, double gamma) {
  for (const RegistryEntry& e : kRegistry) {
    if (name == e.name) return RecipeFunction{e.name, e.evaluate, e.bound(gamma), e.formula};
  }
  throw std::invalid_argument("unknown recipe function '" + name + "'");
}

std::vector<std::string> recipe_function_names() {
  std::vector<std::string> names;
  for (const RegistryEntry& e : kRegistry) names.emplace_back(e.name);
  return names;
}

}  // namespace hv
