#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hvsinglet/models.hpp"

namespace hv {

/// (s - 1/2)^(2s - 1) / (s^s (s - 1)^(s - 1)), with 0^0 = 1 at s = 1.
/// Largest |g| for which (1 - (a.b)^2)^s g keeps every table entry in
/// [0, 1/2]. Throws std::invalid_argument for s < 1.
double recipe_bound(double s);

/// Bounded seed function f(lambda, a, b) for the recipe.
///
/// f must be built from rotation invariants (dot products among a, b and the
/// vector components of lambda, plus scalars and labels) and the lambda
/// measure must be rotation invariant. Under those conditions the mean of f
/// depends on the settings only through a.b, which the builder exploits.
struct RecipeFunction {
  std::string name;
  std::function<double(const LambdaPoint&, const UnitVector&, const UnitVector&)> evaluate;
  /// Declared sup |f| over the support.
  double bound;
  std::string formula;
};

struct RecipeInput {
  RecipeFunction f;
  double s;
  LambdaSpace lambda_space;
};

struct RecipeOptions {
  std::uint64_t seed = 1;
  /// Random (lambda, a, b) points for the sup/inf search.
  std::size_t search_samples = 1'000'000;
  std::size_t refine_iterations = 400;
  /// MC samples for the mean of f when the space has no quadrature.
  std::size_t mean_samples = 1'000'000;
  double safety_factor = 0.99;
  /// Skip the sup/inf search and use this multiplier (reloading a spec).
  std::optional<double> fixed_scale;
};

struct RecipeModel {
  HiddenVariableModel model;
  double s;
  double bound;
  /// Estimated sup and inf of the unscaled zero-average g.
  double sup_g;
  double inf_g;
  /// Multiplier applied to g (1 when the bound already holds).
  double scale;
};

/// Builds C = (1 - (a.b)^2)^s * scale * (f - mean f). The mean of f at fixed
/// settings is tabulated on Chebyshev nodes in a.b (quadrature when the space
/// has one, MC otherwise) and evaluated by barycentric interpolation.
///
/// Throws std::invalid_argument for s < 1, std::domain_error when f exceeds
/// its declared bound on the sampled domain, when its mean is not finite, or
/// when the tabulated mean disagrees with direct quadrature (f not rotation
/// invariant).
RecipeModel build_recipe_model(const RecipeInput& input, const RecipeOptions& options = {});

/// Built-in seed functions over lambda = (x, u), with x the scalar and u the
/// unit vector. Throws std::invalid_argument for an unknown name.
RecipeFunction find_recipe_function(const std::string& name, double gamma);
std::vector<std::string> recipe_function_names();

}  // namespace hv
