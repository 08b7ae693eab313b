#pragma once

// Synthetic measurement traces: swept-sine spectra with optional calibration
// sidebands and a noise floor, phase-scan power traces, the phase-lock error
// signal, and noisy parametric (ratio_max, ratio_min) datasets.  Everything is
// deterministic given the seed; with all noise parameters at zero the traces
// reproduce the loop algebra exactly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "ringloop/cavity.hpp"
#include "ringloop/core.hpp"
#include "ringloop/errors.hpp"
#include "ringloop/estimation.hpp"
#include "ringloop/loop.hpp"

namespace ringloop {

struct EmulationConfig {
  double noise_floor = 0.0;        // flat floor, as a fraction of the open-loop peak
  double sideband_offset = 0.0;    // detuning of the calibration sidebands (MHz)
  double sideband_depth = 0.0;     // replica amplitude relative to the carrier, in [0, 1)
  double detector_noise_rel = 0.0; // 1-sigma relative multiplicative detector noise
  std::uint64_t detector_noise_seed = 0;
  std::size_t sample_count = 1001;
  // Detuning window for swept traces; leave both NaN for the default
  // +/- 5 gamma_p around resonance.
  double grid_min = std::numeric_limits<double>::quiet_NaN();
  double grid_max = std::numeric_limits<double>::quiet_NaN();
};

inline void validate(const EmulationConfig& cfg) {
  if (!(cfg.noise_floor >= 0.0) || !std::isfinite(cfg.noise_floor))
    throw ValidationError("EmulationConfig: noise_floor must be nonnegative");
  if (!(cfg.sideband_offset >= 0.0) || !std::isfinite(cfg.sideband_offset))
    throw ValidationError("EmulationConfig: sideband_offset must be nonnegative");
  if (!(cfg.sideband_depth >= 0.0) || !(cfg.sideband_depth < 1.0))
    throw ValidationError("EmulationConfig: sideband_depth must lie in [0, 1)");
  if (!(cfg.detector_noise_rel >= 0.0) || !std::isfinite(cfg.detector_noise_rel))
    throw ValidationError("EmulationConfig: detector_noise_rel must be nonnegative");
  if (cfg.sample_count < 2)
    throw ValidationError("EmulationConfig: sample_count must exceed 1");
  const bool min_set = std::isfinite(cfg.grid_min);
  const bool max_set = std::isfinite(cfg.grid_max);
  if (min_set != max_set)
    throw ValidationError("EmulationConfig: set grid_min and grid_max together");
  if (min_set && !(cfg.grid_min < cfg.grid_max))
    throw ValidationError("EmulationConfig: grid_min must be below grid_max");
}

namespace detail {

inline std::vector<double> resolve_grid(const PlantModel& plant,
                                        const EmulationConfig& cfg) {
  const double span = 5.0 * plant.gamma_p();
  const double lo = std::isfinite(cfg.grid_min) ? cfg.grid_min : -span;
  const double hi = std::isfinite(cfg.grid_max) ? cfg.grid_max : span;
  return linspace(lo, hi, cfg.sample_count);
}

}  // namespace detail

struct SweptSineEmulation {
  FrequencyTrace open;    // detected open-loop power vs detuning
  FrequencyTrace closed;  // detected closed-loop power vs detuning
  FrequencyTrace ratio;   // closed/open after noise-floor subtraction
};

// Swept-probe spectra at fixed feedback phase.  Sidebands are additive
// shifted replicas of the ideal power; the noise floor is a flat offset; the
// detector noise multiplies each detected sample (open then closed, per grid
// point).  The ratio divides out the floor the way the measurement would.
inline SweptSineEmulation emulate_swept_sine(const PlantModel& plant,
                                             const CompensatorModel& comp,
                                             const LoopEnvironment& env,
                                             const EmulationConfig& cfg) {
  validate(cfg);
  const std::vector<double> grid = detail::resolve_grid(plant, cfg);
  const std::size_t n = grid.size();

  const auto open_ideal = [&](double delta) {
    return std::norm(plant_tf(plant, TransferChannel::zw, Complex(0.0, delta)));
  };
  const auto closed_ideal = [&](double delta) {
    return power_ratio(plant, comp, env, Complex(0.0, delta)) * open_ideal(delta);
  };

  std::vector<double> open(n), closed(n);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    open[i] = open_ideal(grid[i]);
    closed[i] = closed_ideal(grid[i]);
    peak = std::max(peak, open[i]);
  }
  if (cfg.sideband_depth > 0.0) {
    const double d = cfg.sideband_depth, off = cfg.sideband_offset;
    for (std::size_t i = 0; i < n; ++i) {
      open[i] += d * (open_ideal(grid[i] - off) + open_ideal(grid[i] + off));
      closed[i] += d * (closed_ideal(grid[i] - off) + closed_ideal(grid[i] + off));
    }
  }

  const double floor_abs = cfg.noise_floor * peak;
  for (std::size_t i = 0; i < n; ++i) {
    open[i] += floor_abs;
    closed[i] += floor_abs;
  }
  if (cfg.detector_noise_rel > 0.0) {
    std::mt19937_64 rng(cfg.detector_noise_seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      open[i] = std::max(0.0, open[i] * (1.0 + cfg.detector_noise_rel * gauss(rng)));
      closed[i] =
          std::max(0.0, closed[i] * (1.0 + cfg.detector_noise_rel * gauss(rng)));
    }
  }

  std::vector<Complex> open_v(n), closed_v(n), ratio_v(n);
  const double denominator_floor = 1e-12 * peak;
  for (std::size_t i = 0; i < n; ++i) {
    open_v[i] = open[i];
    closed_v[i] = closed[i];
    ratio_v[i] =
        (closed[i] - floor_abs) / std::max(open[i] - floor_abs, denominator_floor);
  }
  return {FrequencyTrace(grid, std::move(open_v), TraceKind::power),
          FrequencyTrace(grid, std::move(closed_v), TraceKind::power),
          FrequencyTrace(grid, std::move(ratio_v), TraceKind::power_ratio)};
}

// Linear feedback-phase ramp phi(t) for t in [0, 1]; either direction.
struct PhaseRamp {
  double phi_start = 0.0;
  double phi_end = 2.0 * M_PI;
};

struct PhaseScanEmulation {
  std::vector<double> time_frac;            // scan time, normalized to [0, 1]
  std::vector<double> phi;                  // feedback phase along the ramp (rad)
  std::vector<double> power;                // detected on-resonance power
  std::vector<double> open_loop_reference;  // flat open-loop power line
  std::vector<double> noise_floor_reference;  // flat noise-floor line
  double open_loop_level = 0.0;
  double floor_level = 0.0;
};

// On-resonance power while the feedback phase ramps across the scan: the loop
// swings between the negative- and positive-feedback extremes.  The two flat
// reference series are noiseless.
inline PhaseScanEmulation emulate_phase_scan(const PlantModel& plant,
                                             const CompensatorModel& comp, double mu,
                                             const EmulationConfig& cfg,
                                             const PhaseRamp& ramp) {
  validate(cfg);
  if (!std::isfinite(ramp.phi_start) || !std::isfinite(ramp.phi_end) ||
      ramp.phi_start == ramp.phi_end)
    throw ValidationError("PhaseRamp: phi_start and phi_end must differ");

  const std::size_t n = cfg.sample_count;
  const double p_open = std::norm(plant_tf(plant, TransferChannel::zw, Complex(0.0)));
  const double floor_abs = cfg.noise_floor * p_open;

  PhaseScanEmulation out;
  out.time_frac = linspace(0.0, 1.0, n);
  out.phi.resize(n);
  out.power.resize(n);
  out.open_loop_reference.assign(n, p_open);
  out.noise_floor_reference.assign(n, floor_abs);
  out.open_loop_level = p_open;
  out.floor_level = floor_abs;

  std::mt19937_64 rng(cfg.detector_noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double phi = ramp.phi_start + out.time_frac[i] * (ramp.phi_end - ramp.phi_start);
    out.phi[i] = phi;
    const double ratio =
        power_ratio(plant, comp, LoopEnvironment(mu, phi), Complex(0.0));
    double power = ratio * p_open + floor_abs;
    if (cfg.detector_noise_rel > 0.0)
      power = std::max(0.0, power * (1.0 + cfg.detector_noise_rel * gauss(rng)));
    out.power[i] = power;
  }
  return out;
}

// Phenomenological phase-lock error signal: the derivative of the
// on-resonance power ratio with respect to feedback phase, by central finite
// difference (a small phase dither plus synchronous demodulation measures
// exactly this to first order).
inline double lock_error_signal(const PlantModel& plant, const CompensatorModel& comp,
                                double mu, double phi) {
  const double h = 1e-4;
  const double above =
      power_ratio(plant, comp, LoopEnvironment(mu, phi + h), Complex(0.0));
  const double below =
      power_ratio(plant, comp, LoopEnvironment(mu, phi - h), Complex(0.0));
  return (above - below) / (2.0 * h);
}

struct LockScan {
  std::vector<double> phi;    // feedback phase (rad)
  std::vector<double> power;  // noiseless detected on-resonance power
  std::vector<double> error;  // lock error signal at each phase
};

// Noiseless lock diagnostic across the capture range around the
// negative-feedback operating point (phi in [-pi/2, pi/2]): the error signal
// crosses zero exactly where the detected power is smallest, and nowhere else
// in this window.
inline LockScan lock_scan(const PlantModel& plant, const CompensatorModel& comp,
                          double mu, const EmulationConfig& cfg) {
  validate(cfg);
  const double p_open = std::norm(plant_tf(plant, TransferChannel::zw, Complex(0.0)));
  const double floor_abs = cfg.noise_floor * p_open;

  LockScan out;
  out.phi = linspace(-M_PI / 2.0, M_PI / 2.0, cfg.sample_count);
  out.power.resize(out.phi.size());
  out.error.resize(out.phi.size());
  for (std::size_t i = 0; i < out.phi.size(); ++i) {
    const double ratio =
        power_ratio(plant, comp, LoopEnvironment(mu, out.phi[i]), Complex(0.0));
    out.power[i] = ratio * p_open + floor_abs;
    out.error[i] = lock_error_signal(plant, comp, mu, out.phi[i]);
  }
  return out;
}

// Parametric-sweep dataset: (ratio_max, ratio_min) at each gain setting, with
// optional multiplicative detector noise (one draw for the max branch, then
// one for the min branch, per point).
inline std::vector<ParametricPoint> emulate_parametric_dataset(
    const PlantModel& plant, double eta_gamma, double mu,
    const std::vector<double>& eta_k_values, double noise_rel, std::uint64_t seed) {
  if (!(noise_rel >= 0.0) || !std::isfinite(noise_rel))
    throw ValidationError("emulate_parametric_dataset: noise_rel must be nonnegative");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<ParametricPoint> points;
  points.reserve(eta_k_values.size());
  for (double eta_k : eta_k_values) {
    auto [ratio_max, ratio_min] = predict_parametric_point(plant, eta_gamma, mu, eta_k);
    if (noise_rel > 0.0) {
      ratio_max = std::max(0.0, ratio_max * (1.0 + noise_rel * gauss(rng)));
      ratio_min = std::max(0.0, ratio_min * (1.0 + noise_rel * gauss(rng)));
      if (ratio_min > ratio_max) std::swap(ratio_min, ratio_max);
    }
    points.push_back({eta_k, ratio_max, ratio_min});
  }
  return points;
}

}  // namespace ringloop
