#pragma once

// Quasi-static elastic wall: linear hoop-stress law plus pressure/stress
// equilibrium at the wall, solved in closed form for the radius.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "tubeflow/domain.hpp"
#include "tubeflow/errors.hpp"

namespace tubeflow::structure {

/// Relative distance below the singular pressure that is still admissible.
inline constexpr double kSingularityMargin = 1e-6;

struct WallResponse {
  std::vector<double> radius;
  std::vector<double> area;
};

inline double circumferential_stress(double r, const TubeParams& params) {
  return params.elastic_modulus * (r - params.r0) / params.r0 + params.sigma0;
}

/// Pressure at which the closed-form radius diverges, E*h/r0.
inline double singular_pressure(const TubeParams& params) {
  return params.elastic_modulus * params.h / params.r0;
}

/// Equilibrium residual p*r - sigma(r)*h.
inline double equilibrium_residual(double p, double r, const TubeParams& params) {
  return p * r - circumferential_stress(r, params) * params.h;
}

inline double radius_from_pressure(double p, const TubeParams& params, std::size_t node = 0) {
  const double p_sing = singular_pressure(params);
  if (!std::isfinite(p) || p >= p_sing * (1.0 - kSingularityMargin))
    throw WallBlowUp("pressure " + std::to_string(p) + " at node " + std::to_string(node) +
                         " reaches the singular wall pressure " + std::to_string(p_sing),
                     node);
  const double r = params.h * (params.sigma0 - params.elastic_modulus) / (p - p_sing);
  if (!(r > 0.0))
    throw InvalidArgument("wall law gives non-positive radius at node " + std::to_string(node) +
                          " (check E > sigma0)");
  return r;
}

/// Pointwise wall response; node i depends on p[i] only.
inline WallResponse solve_structure(std::span<const double> pressure, const TubeParams& params) {
  WallResponse out;
  out.radius.resize(pressure.size());
  out.area.resize(pressure.size());
  for (std::size_t i = 0; i < pressure.size(); ++i) {
    const double r = radius_from_pressure(pressure[i], params, i);
    out.radius[i] = r;
    out.area[i] = std::numbers::pi * r * r;
  }
  return out;
}

inline double area_from_pressure(double p, const TubeParams& params) {
  const double r = radius_from_pressure(p, params);
  return std::numbers::pi * r * r;
}

}  // namespace tubeflow::structure
