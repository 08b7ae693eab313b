#pragma once

// Ring-resonator models: cavity geometry, the four-mirror plant, and the
// single-pole compensator cavity.
//
// The plant is a traveling-wave ring with mirrors numbered 1..4.  Mirrors 1
// and 4 are the coupling ports (noise in / monitored out and feedback in /
// error out); mirrors 2 and 3 plus the round-trip loss only contribute to
// the total decay rate.  First-order input-output theory gives the four
// port-to-port transfer functions used here:
//
//   G_zw(s) = -2 sqrt(k1 k4) / (s + gamma_p)
//   G_zu(s) = 1 - 2 k4 / (s + gamma_p)
//   G_yw(s) = 1 - 2 k1 / (s + gamma_p)
//   G_yu(s) = G_zw(s)
//
// and the compensator cavity (gain trim eta_K, decay-rate error eta_gamma):
//
//   K_uy(s) = 2 sqrt(eta_K) sqrt(k1 k4) / (s + gamma_p - 2(k1 + k4) + eta_gamma)

#include <array>
#include <cmath>
#include <cstddef>
#include <string>

#include "ringloop/core.hpp"
#include "ringloop/errors.hpp"

namespace ringloop {

// Physical description of a ring cavity: per-mirror power transmissions
// t_sq[0..3] (mirrors 1..4), lumped round-trip power loss l_sq, and
// round-trip length in meters.
class RingCavityGeometry {
 public:
  RingCavityGeometry(const std::array<double, 4>& t_sq, double l_sq, double length_m)
      : t_sq_(t_sq), l_sq_(l_sq), length_m_(length_m) {
    for (std::size_t i = 0; i < 4; ++i) {
      if (!(t_sq_[i] >= 0.0 && t_sq_[i] <= 1.0))
        throw ValidationError("RingCavityGeometry: t_sq[" + std::to_string(i + 1) +
                              "] must lie in [0, 1]");
    }
    if (!(l_sq_ >= 0.0 && l_sq_ <= 1.0))
      throw ValidationError("RingCavityGeometry: l_sq must lie in [0, 1]");
    if (!(length_m_ > 0.0))
      throw ValidationError("RingCavityGeometry: length_m must be positive");
  }

  const std::array<double, 4>& t_sq() const noexcept { return t_sq_; }
  double l_sq() const noexcept { return l_sq_; }
  double length_m() const noexcept { return length_m_; }

 private:
  std::array<double, 4> t_sq_;
  double l_sq_;
  double length_m_;
};

// Total amplitude decay rate in MHz: c (sum t_i^2 + l^2) / (4 pi L).
inline double decay_rate_from_geometry(const RingCavityGeometry& geometry) {
  const auto& t = geometry.t_sq();
  const double budget = t[0] + t[1] + t[2] + t[3] + geometry.l_sq();
  return speed_of_light * budget / (4.0 * M_PI * geometry.length_m()) / hz_per_mhz;
}

// Partial coupling rate of one mirror (1-based index) in MHz:
// c t_i^2 / (4 pi L).
inline double coupler_rate_from_geometry(const RingCavityGeometry& geometry,
                                         std::size_t mirror) {
  if (mirror < 1 || mirror > 4)
    throw ValidationError("coupler_rate_from_geometry: mirror index must be 1..4");
  return speed_of_light * geometry.t_sq()[mirror - 1] /
         (4.0 * M_PI * geometry.length_m()) / hz_per_mhz;
}

// The plant resonator reduced to the three rates that enter its transfer
// functions.  Requires 2(k1 + k4) < gamma_p so the ideal compensator pole
// gamma_p - 2(k1 + k4) stays positive.
class PlantModel {
 public:
  PlantModel(double gamma_p, double k1, double k4)
      : gamma_p_(gamma_p), k1_(k1), k4_(k4) {
    if (!(gamma_p_ > 0.0))
      throw ValidationError("PlantModel: gamma_p must be positive");
    if (!(k1_ >= 0.0) || !(k4_ >= 0.0))
      throw ValidationError("PlantModel: k1 and k4 must be nonnegative");
    if (!(2.0 * (k1_ + k4_) < gamma_p_))
      throw ValidationError(
          "PlantModel: requires 2*(k1 + k4) < gamma_p (got 2*(" +
          std::to_string(k1_) + " + " + std::to_string(k4_) + ") vs gamma_p = " +
          std::to_string(gamma_p_) + ")");
  }

  // Derives all three rates from the physical geometry; mirrors 1 and 4 are
  // the coupling ports.
  static PlantModel from_geometry(const RingCavityGeometry& geometry) {
    return PlantModel(decay_rate_from_geometry(geometry),
                      coupler_rate_from_geometry(geometry, 1),
                      coupler_rate_from_geometry(geometry, 4));
  }

  double gamma_p() const noexcept { return gamma_p_; }
  double k1() const noexcept { return k1_; }
  double k4() const noexcept { return k4_; }

  // Pole of the compensator that exactly inverts this plant (eta_gamma = 0).
  double ideal_compensator_pole() const noexcept {
    return gamma_p_ - 2.0 * (k1_ + k4_);
  }

 private:
  double gamma_p_;
  double k1_;
  double k4_;
};

// The four plant input/output channels: z = monitored output, y = error
// output, w = noise input, u = feedback input.
enum class TransferChannel { zw, zu, yw, yu };

inline Complex plant_tf(const PlantModel& plant, TransferChannel channel, Complex s) {
  const Complex den = s + plant.gamma_p();
  if (den == Complex(0.0, 0.0))
    throw PoleError("plant_tf: evaluated exactly at the plant pole s = -gamma_p");
  switch (channel) {
    case TransferChannel::zw:
    case TransferChannel::yu:
      return -2.0 * std::sqrt(plant.k1() * plant.k4()) / den;
    case TransferChannel::zu:
      return 1.0 - 2.0 * plant.k4() / den;
    case TransferChannel::yw:
      return 1.0 - 2.0 * plant.k1() / den;
  }
  throw ValidationError("plant_tf: unknown channel");
}

// Compensator cavity tied to a specific plant.  eta_K trims the gain
// (eta_K = 1 is the ideal), eta_gamma is the signed error in the decay rate
// (eta_gamma = 0 is the ideal).  A nonpositive pole is allowed but flagged
// via is_stable() rather than rejected: it describes a mis-built controller,
// which is still a queryable model.
class CompensatorModel {
 public:
  CompensatorModel(double eta_k, double eta_gamma, const PlantModel& plant)
      : eta_k_(eta_k), eta_gamma_(eta_gamma), plant_(plant) {
    if (!(eta_k_ >= 0.0))
      throw ValidationError("CompensatorModel: eta_K must be nonnegative");
    if (!std::isfinite(eta_gamma_))
      throw ValidationError("CompensatorModel: eta_gamma must be finite");
  }

  double eta_k() const noexcept { return eta_k_; }
  double eta_gamma() const noexcept { return eta_gamma_; }
  const PlantModel& plant() const noexcept { return plant_; }

  // Compensator decay rate gamma_c = gamma_p - 2(k1 + k4) + eta_gamma; this
  // is both the pole location and the physically measurable cavity decay.
  double decay_rate() const noexcept {
    return plant_.ideal_compensator_pole() + eta_gamma_;
  }
  double pole() const noexcept { return decay_rate(); }

  bool is_stable() const noexcept { return decay_rate() > 0.0; }

 private:
  double eta_k_;
  double eta_gamma_;
  PlantModel plant_;
};

inline Complex compensator_tf(const CompensatorModel& comp, Complex s) {
  const Complex den = s + comp.decay_rate();
  if (den == Complex(0.0, 0.0))
    throw PoleError("compensator_tf: evaluated exactly at the compensator pole");
  const PlantModel& plant = comp.plant();
  return 2.0 * std::sqrt(comp.eta_k()) * std::sqrt(plant.k1() * plant.k4()) / den;
}

}  // namespace ringloop
