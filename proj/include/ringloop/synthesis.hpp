#pragma once

// Compensator synthesis: the ideal inverting compensator, scalar gain/phase
// optimization against imperfections, and worst-case band metrics.

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "ringloop/cavity.hpp"
#include "ringloop/core.hpp"
#include "ringloop/errors.hpp"
#include "ringloop/loop.hpp"

namespace ringloop {

struct SynthesisResult {
  double eta_k_opt = 0.0;
  double phi_opt = 0.0;
  double ratio_at_zero = 0.0;  // power ratio at s = 0 for the reported optimum
  double rejection_db = 0.0;   // -10 log10(ratio_at_zero); +inf for an exact null
  double band_metric = 0.0;    // worst-case ratio over the requested band
};

enum class OptimizeTarget { at_zero, band };

// eta_K = 1, eta_gamma = 0: with mu = 1 the closed loop vanishes identically.
inline CompensatorModel ideal_compensator(const PlantModel& plant) {
  if (!(plant.ideal_compensator_pole() > 0.0))
    throw ValidationError(
        "ideal_compensator: infeasible ideal, requires 2*(k1 + k4) < gamma_p");
  return CompensatorModel(1.0, 0.0, plant);
}

// Worst-case (sup) power ratio over |delta| <= band_edge.  Starts from a
// 513-point grid and doubles the density until successive sups agree to 1e-6.
inline double broadband_metric(const PlantModel& plant, const CompensatorModel& comp,
                               const LoopEnvironment& env, double band_edge) {
  if (!(band_edge > 0.0))
    throw ValidationError("broadband_metric: band edge must be positive");
  std::size_t n = 513;
  double previous = std::numeric_limits<double>::infinity();
  for (;;) {
    double sup = 0.0;
    const std::vector<double> grid = linspace(-band_edge, band_edge, n);
    for (double delta : grid) {
      const double value = power_ratio(plant, comp, env, Complex(0.0, delta));
      if (value > sup) sup = value;
    }
    if (std::abs(sup - previous) < 1e-6 || n >= (std::size_t{1} << 20)) return sup;
    previous = sup;
    n = 2 * n - 1;  // nested refinement keeps previous sample points aligned
  }
}

// Mean-ratio companion statistic over the same band, refined the same way.
inline double broadband_mean(const PlantModel& plant, const CompensatorModel& comp,
                             const LoopEnvironment& env, double band_edge) {
  if (!(band_edge > 0.0))
    throw ValidationError("broadband_mean: band edge must be positive");
  std::size_t n = 513;
  double previous = std::numeric_limits<double>::infinity();
  for (;;) {
    double sum = 0.0;
    const std::vector<double> grid = linspace(-band_edge, band_edge, n);
    for (double delta : grid)
      sum += power_ratio(plant, comp, env, Complex(0.0, delta));
    const double mean = sum / static_cast<double>(n);
    if (std::abs(mean - previous) < 1e-6 || n >= (std::size_t{1} << 20)) return mean;
    previous = mean;
    n = 2 * n - 1;
  }
}

namespace detail {

// Sharpens a golden-section minimum of a smooth objective with a few
// parabolic-vertex steps; needed so exact nulls (ratio -> 0) are resolved
// well below the snap threshold instead of stalling at ~tol^2.
template <typename F>
double parabola_polish(F&& f, double x, double lo, double hi) {
  for (double h : {1e-5, 1e-7}) {
    if (x - h < lo || x + h > hi) continue;
    const double f_minus = f(x - h);
    const double f_center = f(x);
    const double f_plus = f(x + h);
    const double curvature = f_plus - 2.0 * f_center + f_minus;
    if (!(curvature > 0.0)) continue;
    double candidate = x - 0.5 * h * (f_plus - f_minus) / curvature;
    if (candidate < lo) candidate = lo;
    if (candidate > hi) candidate = hi;
    if (f(candidate) <= f_center) x = candidate;
  }
  return x;
}

}  // namespace detail

// Minimizes the s = 0 power ratio (AT_ZERO) or the worst-case band ratio
// (BAND) over eta_K in [0, eta_k_max] and the feedback phase.  Both phase
// branches phi = 0 and phi = pi are searched and refined locally; the ratio
// at s = 0 is snapped to an exact 0 when the polished minimum falls below
// 1e-10 (only an exact null can get that small: any non-null configuration
// is floored at (1 - mu)|S_u|^2).
inline SynthesisResult optimize_gain(const PlantModel& plant, double eta_gamma,
                                     double mu, OptimizeTarget target,
                                     double band_edge = 0.0,
                                     double eta_k_max = 4.0) {
  if (!(eta_k_max > 0.0))
    throw ValidationError("optimize_gain: eta_K search bound must be positive");
  if (target == OptimizeTarget::band && !(band_edge > 0.0))
    throw ValidationError("optimize_gain: BAND target requires a positive band edge");
  LoopEnvironment(mu, 0.0);  // validates mu

  const auto objective = [&](double eta_k, double phi) -> double {
    try {
      const CompensatorModel comp(eta_k, eta_gamma, plant);
      const LoopEnvironment env(mu, phi);
      if (target == OptimizeTarget::band)
        return broadband_metric(plant, comp, env, band_edge);
      return power_ratio(plant, comp, env, Complex(0.0, 0.0));
    } catch (const AlgebraicLoopError&) {
      return std::numeric_limits<double>::infinity();
    }
  };

  double best_eta_k = 0.0;
  double best_phi = 0.0;
  double best_value = std::numeric_limits<double>::infinity();

  for (double phi_branch : {0.0, M_PI}) {
    double phi = phi_branch;
    double eta_k = detail::golden_section_min(
        [&](double x) { return objective(x, phi); }, 0.0, eta_k_max, 1e-6);
    for (int round = 0; round < 2; ++round) {
      phi = detail::golden_section_min(
          [&](double x) { return objective(eta_k, x); }, phi - M_PI / 2.0,
          phi + M_PI / 2.0, 1e-7);
      eta_k = detail::golden_section_min(
          [&](double x) { return objective(x, phi); }, 0.0, eta_k_max, 1e-6);
    }
    eta_k = detail::parabola_polish([&](double x) { return objective(x, phi); },
                                    eta_k, 0.0, eta_k_max);
    const double value = objective(eta_k, phi);
    if (value < best_value) {
      best_value = value;
      best_eta_k = eta_k;
      best_phi = phi;
    }
  }

  SynthesisResult result;
  result.eta_k_opt = best_eta_k;
  result.phi_opt = LoopEnvironment(mu, best_phi).phi();

  const CompensatorModel comp(best_eta_k, eta_gamma, plant);
  const LoopEnvironment env(mu, best_phi);
  result.ratio_at_zero = power_ratio(plant, comp, env, Complex(0.0, 0.0));
  if (result.ratio_at_zero < 1e-10) result.ratio_at_zero = 0.0;
  result.rejection_db = -to_db(result.ratio_at_zero);
  result.band_metric = band_edge > 0.0
                           ? broadband_metric(plant, comp, env, band_edge)
                           : result.ratio_at_zero;
  return result;
}

}  // namespace ringloop
