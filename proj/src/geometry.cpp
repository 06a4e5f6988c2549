#include "hvsinglet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hv {

UnitVector::UnitVector(double x, double y, double z) {
  const double norm = std::sqrt(x * x + y * y + z * z);
  if (!std::isfinite(norm) || norm == 0.0) {
    throw std::invalid_argument("UnitVector: cannot normalize a zero or non-finite vector");
  }
  x_ = x / norm;
  y_ = y / norm;
  z_ = z / norm;
}

double dot(const UnitVector& a, const UnitVector& b) {
  const double d = a.x() * b.x() + a.y() * b.y() + a.z() * b.z();
  return std::clamp(d, -1.0, 1.0);
}

UnitVector sample_uniform_sphere(RandomStream& rng) {
  const double z = 2.0 * rng.uniform01() - 1.0;
  const double phi = 2.0 * std::numbers::pi * rng.uniform01();
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return UnitVector(r * std::cos(phi), r * std::sin(phi), z);
}

namespace {

struct Orthogonal {
  double x, y, z, norm;
};

Orthogonal orthogonal_part(const UnitVector& a, const UnitVector& direction) {
  const double along = a.x() * direction.x() + a.y() * direction.y() + a.z() * direction.z();
  Orthogonal o{direction.x() - along * a.x(), direction.y() - along * a.y(),
               direction.z() - along * a.z(), 0.0};
  o.norm = std::sqrt(o.x * o.x + o.y * o.y + o.z * o.z);
  return o;
}

}  // namespace

UnitVector rotate_towards(const UnitVector& a, const UnitVector& direction, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 0.1)) {
    throw std::invalid_argument("rotate_towards: epsilon must lie in (0, 0.1]");
  }
  const Orthogonal d = orthogonal_part(a, direction);
  if (d.norm < 1e-9) {
    throw std::invalid_argument("rotate_towards: direction is parallel to a");
  }
  const double s = epsilon / d.norm;
  return UnitVector(a.x() + s * d.x, a.y() + s * d.y, a.z() + s * d.z);
}

UnitVector at_cosine(const UnitVector& a, const UnitVector& direction, double cosine) {
  if (!(cosine >= -1.0 && cosine <= 1.0)) {
    throw std::invalid_argument("at_cosine: cosine outside [-1, 1]");
  }
  const Orthogonal d = orthogonal_part(a, direction);
  if (d.norm < 1e-9) {
    throw std::invalid_argument("at_cosine: direction is parallel to a");
  }
  // (1 - c)(1 + c) keeps full precision near c = +-1.
  const double sine = std::sqrt((1.0 - cosine) * (1.0 + cosine)) / d.norm;
  return UnitVector(cosine * a.x() + sine * d.x, cosine * a.y() + sine * d.y,
                    cosine * a.z() + sine * d.z);
}

GaussLegendre gauss_legendre(std::size_t n) {
  if (n == 0) throw std::invalid_argument("gauss_legendre: n must be positive");
  GaussLegendre rule;
  rule.nodes.assign(n, 0.0);
  rule.weights.assign(n, 0.0);
  const std::size_t half = (n + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    // Tricomi initial guess for the i-th largest root, then Newton.
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double kk = static_cast<double>(k);
        const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) {
        p1 = x;
        p0 = 1.0;
      }
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double step = p1 / dp;
      x -= step;
      if (std::abs(step) < 1e-16) break;
    }
    if (n % 2 == 1 && i == half - 1) x = 0.0;
    // Recompute the derivative at the converged root.
    double p0 = 1.0;
    double p1 = x;
    for (std::size_t k = 2; k <= n; ++k) {
      const double kk = static_cast<double>(k);
      const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
      p0 = p1;
      p1 = p2;
    }
    if (n == 1) p0 = 1.0;
    dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[n - 1 - i] = x;
    rule.nodes[i] = -x;
    rule.weights[n - 1 - i] = w;
    rule.weights[i] = w;
  }
  return rule;
}

SphereGrid make_sphere_grid(std::size_t n_theta, std::size_t n_phi) {
  if (n_theta == 0 || n_phi == 0) {
    throw std::invalid_argument("make_sphere_grid: grid sizes must be positive");
  }
  const GaussLegendre rule = gauss_legendre(n_theta);
  SphereGrid grid;
  grid.nodes.reserve(n_theta * n_phi);
  grid.weights.reserve(n_theta * n_phi);
  double total = 0.0;
  for (std::size_t i = 0; i < n_theta; ++i) {
    const double z = rule.nodes[i];
    const double r = std::sqrt((1.0 - z) * (1.0 + z));
    for (std::size_t j = 0; j < n_phi; ++j) {
      const double phi = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n_phi);
      grid.nodes.emplace_back(r * std::cos(phi), r * std::sin(phi), z);
      const double w = rule.weights[i] / (2.0 * static_cast<double>(n_phi));
      grid.weights.push_back(w);
      total += w;
    }
  }
  for (double& w : grid.weights) w /= total;
  return grid;
}

}  // namespace hv
