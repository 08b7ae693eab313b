#pragma once

// Shared constants and small numeric utilities.
//
// Unit convention used throughout the library: every rate (decay rates,
// partial coupling rates, eta_gamma) and every detuning is in MHz.  Geometry
// inputs are SI (meters, dimensionless power fractions).

#include <cmath>
#include <complex>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace ringloop {

inline constexpr const char* version = "0.1.0";

inline constexpr double speed_of_light = 299792458.0;  // m/s
inline constexpr double hz_per_mhz = 1e6;

using Complex = std::complex<double>;

// Power ratio in decibels; the single place "7 dB rejection" style numbers
// are computed.
inline double to_db(double power_ratio_value) {
  return 10.0 * std::log10(power_ratio_value);
}

// Evenly spaced grid including both endpoints.
inline std::vector<double> linspace(double lo, double hi, std::size_t count) {
  if (count < 2) throw std::invalid_argument("linspace: need at least two points");
  if (!(lo < hi)) throw std::invalid_argument("linspace: lo must be below hi");
  std::vector<double> grid(count);
  const double step = (hi - lo) / static_cast<double>(count - 1);
  for (std::size_t i = 0; i < count; ++i)
    grid[i] = lo + step * static_cast<double>(i);
  grid.back() = hi;  // kill accumulated rounding at the far endpoint
  return grid;
}

namespace detail {

// Golden-section minimization of a unimodal scalar function on [lo, hi].
// Returns the abscissa of the bracketed minimum once the bracket is
// narrower than tol.
template <typename F>
double golden_section_min(F&& f, double lo, double hi, double tol) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c);
  double fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail
}  // namespace ringloop
