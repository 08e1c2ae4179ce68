#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace emtune {

inline constexpr double kGradCheckTolerance = 1e-4;

struct GradCheckCase {
  std::string name;
  std::size_t points = 0;
  double max_relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;
  double max_relative_error = 0.0;

  bool passed(double tolerance = kGradCheckTolerance) const {
    return max_relative_error < tolerance;
  }
};

// Finite-difference check of every differentiable objective: triplet,
// redundancy-reduction (plain and centered), combined, cross-entropy, and
// the encoder/adapter compositions, each at `points` seeded random points
// away from hinge and ReLU kinks.
GradCheckReport run_gradcheck_suite(std::uint64_t seed = 0, std::size_t points = 10);

}  // namespace emtune
