#pragma once

// Closed-loop composition of plant and compensator.
//
// The feedback phase phi and the mode-matching fraction mu enter through a
// single effective compensator e^{i phi} K_uy used consistently everywhere:
//
//   D(s)   = 1 - sqrt(mu) e^{i phi} K_uy(s) G_yu(s)        (loop denominator)
//   S(s)   = G_zw + G_zu e^{i phi} K_uy G_yw / D           (closed loop)
//   S_m(s) = G_zu e^{i phi} K_uy G_yw / (D G_zw)           (matched part)
//   S_u(s) = e^{i phi} K_uy G_yw / G_zw                    (unmatched part)
//
//   power_ratio = |1 + sqrt(mu) S_m|^2 + (1 - mu) |S_u|^2
//
// phi = 0 is the negative-feedback ("+") branch that suppresses the output;
// phi = pi is the positive-feedback ("-") branch that enhances it.  At
// mu = 1 the power ratio reduces exactly to |S / G_zw|^2.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ringloop/cavity.hpp"
#include "ringloop/core.hpp"
#include "ringloop/errors.hpp"

namespace ringloop {

// Mode matching mu in [0, 1] plus the feedback path phase, normalized into
// [0, 2 pi).
class LoopEnvironment {
 public:
  LoopEnvironment(double mu, double phi) : mu_(mu) {
    if (!(mu_ >= 0.0 && mu_ <= 1.0))
      throw ValidationError("LoopEnvironment: mu must lie in [0, 1]");
    if (!std::isfinite(phi))
      throw ValidationError("LoopEnvironment: phi must be finite");
    const double two_pi = 2.0 * M_PI;
    phi_ = phi - two_pi * std::floor(phi / two_pi);
    if (phi_ >= two_pi) phi_ = 0.0;  // guard the rounding edge at exactly 2 pi
  }

  double mu() const noexcept { return mu_; }
  double phi() const noexcept { return phi_; }

 private:
  double mu_;
  double phi_;
};

enum class TraceKind { complex_tf, power_ratio, power };

// One response series over a strictly increasing detuning grid.  Real-valued
// kinds (power ratio, power) store their data in the real part.
class FrequencyTrace {
 public:
  FrequencyTrace(std::vector<double> grid, std::vector<Complex> values, TraceKind kind)
      : grid_(std::move(grid)), values_(std::move(values)), kind_(kind) {
    if (grid_.empty())
      throw ValidationError("FrequencyTrace: grid must be nonempty");
    if (grid_.size() != values_.size())
      throw ValidationError("FrequencyTrace: grid and values lengths differ");
    for (std::size_t i = 1; i < grid_.size(); ++i)
      if (!(grid_[i - 1] < grid_[i]))
        throw ValidationError("FrequencyTrace: grid must be strictly increasing");
  }

  const std::vector<double>& grid() const noexcept { return grid_; }
  const std::vector<Complex>& values() const noexcept { return values_; }
  TraceKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return grid_.size(); }
  double real_value(std::size_t i) const { return values_.at(i).real(); }

 private:
  std::vector<double> grid_;
  std::vector<Complex> values_;
  TraceKind kind_;
};

namespace detail {

struct LoopEval {
  Complex g_zw, g_zu, g_yw, g_yu;
  Complex k_eff;        // e^{i phi} K_uy(s)
  Complex denominator;  // 1 - sqrt(mu) k_eff g_yu
};

inline LoopEval eval_loop(const PlantModel& plant, const CompensatorModel& comp,
                          const LoopEnvironment& env, Complex s) {
  LoopEval e;
  e.g_zw = plant_tf(plant, TransferChannel::zw, s);
  e.g_zu = plant_tf(plant, TransferChannel::zu, s);
  e.g_yw = plant_tf(plant, TransferChannel::yw, s);
  e.g_yu = e.g_zw;
  e.k_eff = std::polar(1.0, env.phi()) * compensator_tf(comp, s);
  e.denominator = 1.0 - std::sqrt(env.mu()) * e.k_eff * e.g_yu;
  const double mag = std::abs(e.denominator);
  if (mag < AlgebraicLoopError::tolerance) {
    std::ostringstream msg;
    msg << "singular feedback loop: |1 - sqrt(mu) e^{i phi} K G_yu| = " << mag
        << " at s = (" << s.real() << ", " << s.imag() << "), mu = " << env.mu()
        << ", phi = " << env.phi();
    throw AlgebraicLoopError(msg.str(), mag);
  }
  return e;
}

}  // namespace detail

// The matched/unmatched decomposition of the closed loop, normalized by the
// open-loop response.  Exposed because several properties (mode-matching
// floor, phase-extremum location) are statements about these terms.
struct LoopTerms {
  Complex matched;      // S_m
  Complex unmatched;    // S_u
  Complex denominator;  // D
};

inline LoopTerms loop_terms(const PlantModel& plant, const CompensatorModel& comp,
                            const LoopEnvironment& env, Complex s) {
  const detail::LoopEval e = detail::eval_loop(plant, comp, env, s);
  if (e.g_zw == Complex(0.0, 0.0))
    throw std::domain_error(
        "loop_terms: open-loop response G_zw vanishes (k1*k4 == 0), the "
        "normalized ratio is undefined");
  LoopTerms t;
  t.denominator = e.denominator;
  t.matched = e.g_zu * e.k_eff * e.g_yw / (e.denominator * e.g_zw);
  t.unmatched = e.k_eff * e.g_yw / e.g_zw;
  return t;
}

// Closed-loop transfer function from noise input w to monitored output z.
inline Complex closed_loop_tf(const PlantModel& plant, const CompensatorModel& comp,
                              const LoopEnvironment& env, Complex s) {
  const detail::LoopEval e = detail::eval_loop(plant, comp, env, s);
  return e.g_zw + e.g_zu * e.k_eff * e.g_yw / e.denominator;
}

// Closed-loop to open-loop output power ratio including the unmatched
// (mode-mismatched) light.
inline double power_ratio(const PlantModel& plant, const CompensatorModel& comp,
                          const LoopEnvironment& env, Complex s) {
  const LoopTerms t = loop_terms(plant, comp, env, s);
  const double mu = env.mu();
  return std::norm(1.0 + std::sqrt(mu) * t.matched) + (1.0 - mu) * std::norm(t.unmatched);
}

struct SweepResult {
  FrequencyTrace ratio;
  std::optional<FrequencyTrace> open_loop;  // |G_zw(i delta)|^2 companion
};

// Power-ratio trace over s = i*delta for each detuning on the grid.
inline SweepResult frequency_sweep(const PlantModel& plant, const CompensatorModel& comp,
                                   const LoopEnvironment& env,
                                   const std::vector<double>& grid,
                                   bool include_open_loop = false) {
  std::vector<Complex> ratio_values(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    try {
      ratio_values[i] = power_ratio(plant, comp, env, Complex(0.0, grid[i]));
    } catch (const AlgebraicLoopError& err) {
      std::ostringstream msg;
      msg << "frequency_sweep: grid point " << i << " (detuning " << grid[i]
          << "): " << err.what();
      throw AlgebraicLoopError(msg.str(), err.denominator_magnitude());
    }
  }
  SweepResult result{FrequencyTrace(grid, std::move(ratio_values), TraceKind::power_ratio),
                     std::nullopt};
  if (include_open_loop) {
    std::vector<Complex> open_values(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
      open_values[i] =
          std::norm(plant_tf(plant, TransferChannel::zw, Complex(0.0, grid[i])));
    result.open_loop.emplace(grid, std::move(open_values), TraceKind::power);
  }
  return result;
}

struct PhaseScanResult {
  std::vector<double> phi;
  std::vector<double> ratio;
  double phi_min = 0.0;    // refined beyond the grid
  double ratio_min = 0.0;
  double phi_max = 0.0;
  double ratio_max = 0.0;
};

// Power ratio at resonance (s = 0) versus feedback phase, plus refined
// argmin/argmax.  The scan is periodic with exactly one minimum and one
// maximum per 2 pi, so a local search around the best grid points suffices.
inline PhaseScanResult phase_scan(const PlantModel& plant, const CompensatorModel& comp,
                                  double mu, const std::vector<double>& phi_grid) {
  if (phi_grid.size() < 2)
    throw ValidationError("phase_scan: need at least two phase points");
  for (std::size_t i = 0; i < phi_grid.size(); ++i) {
    if (!(phi_grid[i] >= 0.0 && phi_grid[i] <= 2.0 * M_PI))
      throw ValidationError("phase_scan: phi grid must lie within [0, 2 pi]");
    if (i > 0 && !(phi_grid[i - 1] < phi_grid[i]))
      throw ValidationError("phase_scan: phi grid must be strictly increasing");
  }

  const auto ratio_at = [&](double phi) {
    return power_ratio(plant, comp, LoopEnvironment(mu, phi), Complex(0.0, 0.0));
  };

  PhaseScanResult result;
  result.phi = phi_grid;
  result.ratio.resize(phi_grid.size());
  std::size_t imin = 0, imax = 0;
  for (std::size_t i = 0; i < phi_grid.size(); ++i) {
    result.ratio[i] = ratio_at(phi_grid[i]);
    if (result.ratio[i] < result.ratio[imin]) imin = i;
    if (result.ratio[i] > result.ratio[imax]) imax = i;
  }

  // Widest neighbor spacing bounds how far the true extremum can sit from
  // the best grid point; the ratio is evaluated with wrapped phase, so the
  // refinement window may cross 0 or 2 pi.
  double gap = 0.0;
  for (std::size_t i = 1; i < phi_grid.size(); ++i)
    gap = std::max(gap, phi_grid[i] - phi_grid[i - 1]);

  const double wrap = 2.0 * M_PI;
  const auto refine = [&](std::size_t index, bool minimize) {
    const double lo = phi_grid[index] - gap;
    const double hi = phi_grid[index] + gap;
    const auto objective = [&](double phi) {
      const double value = ratio_at(phi);
      return minimize ? value : -value;
    };
    double phi_star = detail::golden_section_min(objective, lo, hi, 1e-7);
    phi_star -= wrap * std::floor(phi_star / wrap);
    if (phi_star >= wrap) phi_star = 0.0;
    return phi_star;
  };

  result.phi_min = refine(imin, true);
  result.ratio_min = ratio_at(result.phi_min);
  result.phi_max = refine(imax, false);
  result.ratio_max = ratio_at(result.phi_max);
  return result;
}

}  // namespace ringloop
