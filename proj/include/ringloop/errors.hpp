#pragma once

#include <stdexcept>
#include <string>

namespace ringloop {

// Bad constructor arguments or malformed input data.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// A transfer function was evaluated exactly at its pole.
class PoleError : public std::domain_error {
 public:
  explicit PoleError(const std::string& what) : std::domain_error(what) {}
};

// The feedback interconnection is (numerically) singular: the loop
// denominator 1 - sqrt(mu) e^{i phi} K G_yu fell below the tolerance.
class AlgebraicLoopError : public std::domain_error {
 public:
  static constexpr double tolerance = 1e-9;

  AlgebraicLoopError(const std::string& what, double denominator_magnitude)
      : std::domain_error(what), denominator_magnitude_(denominator_magnitude) {}

  double denominator_magnitude() const noexcept { return denominator_magnitude_; }

 private:
  double denominator_magnitude_;
};

}  // namespace ringloop
