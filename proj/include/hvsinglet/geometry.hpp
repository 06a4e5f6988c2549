#pragma once

#include <cstddef>
#include <vector>

#include "hvsinglet/random.hpp"

namespace hv {

/// Point on the unit 2-sphere. Construction normalizes, so every instance has
/// x^2 + y^2 + z^2 = 1 to within rounding.
class UnitVector {
 public:
  /// Normalizes (x, y, z); throws std::invalid_argument for a zero or
  /// non-finite input.
  UnitVector(double x, double y, double z);

  double x() const { return x_; }
  double y() const { return y_; }
  double z() const { return z_; }

  UnitVector operator-() const { return UnitVector(-x_, -y_, -z_, Raw{}); }

  static UnitVector e_x() { return {1.0, 0.0, 0.0, Raw{}}; }
  static UnitVector e_y() { return {0.0, 1.0, 0.0, Raw{}}; }
  static UnitVector e_z() { return {0.0, 0.0, 1.0, Raw{}}; }

  friend bool operator==(const UnitVector&, const UnitVector&) = default;

 private:
  struct Raw {};
  UnitVector(double x, double y, double z, Raw) : x_(x), y_(y), z_(z) {}

  double x_;
  double y_;
  double z_;
};

/// Euclidean inner product clamped to [-1, 1].
double dot(const UnitVector& a, const UnitVector& b);

/// Uniform on the sphere via inverse CDF: z ~ U[-1,1], azimuth ~ U[0, 2pi).
UnitVector sample_uniform_sphere(RandomStream& rng);

/// b = (a + eps * d) / sqrt(1 + eps^2), with d the unit component of
/// `direction` orthogonal to a. dot(a, b) = 1 / sqrt(1 + eps^2).
/// Requires 0 < eps <= 0.1; throws std::invalid_argument otherwise or when
/// direction is parallel to a within 1e-9.
UnitVector rotate_towards(const UnitVector& a, const UnitVector& direction, double epsilon);

/// Unit vector b in the plane of a and `direction` with dot(a, b) = cosine,
/// built as cosine * a + sqrt(1 - cosine^2) * d. Used for rays approaching
/// a or -a where 1 -/+ cosine must be resolved to full relative precision.
UnitVector at_cosine(const UnitVector& a, const UnitVector& direction, double cosine);

/// Gauss-Legendre rule on [-1, 1]; nodes ascending, exactly antisymmetric.
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussLegendre gauss_legendre(std::size_t n);

/// Product quadrature on the sphere: Gauss-Legendre in cos(theta) times the
/// uniform trapezoid rule in phi. Weights are normalized to the uniform
/// probability measure (sum to 1).
struct SphereGrid {
  std::vector<UnitVector> nodes;
  std::vector<double> weights;
};

inline constexpr std::size_t kDefaultGridTheta = 64;
inline constexpr std::size_t kDefaultGridPhi = 128;

SphereGrid make_sphere_grid(std::size_t n_theta = kDefaultGridTheta,
                            std::size_t n_phi = kDefaultGridPhi);

}  // namespace hv
