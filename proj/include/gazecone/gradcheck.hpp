#pragma once

// Finite-difference verification of the analytic backward passes.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace gazecone::learning {

struct GradEntry {
  std::string name;  // parameter or input tensor
  std::size_t checked = 0;
  std::size_t kinks = 0;  // entries re-measured with a smaller step
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
};

struct GradReport {
  std::string component;
  double step = 0.0;
  double tolerance = 0.0;
  double max_rel_err = 0.0;
  std::vector<GradEntry> entries;

  bool passed() const { return max_rel_err < tolerance; }
  void print(std::ostream& out) const;
};

// |a - n| / max(|a|, |n|), the denominator floored at 1e-8.
double relative_error(double analytic, double numeric);

// dense, conv2d, relu, sigmoid, softmax, maxpool, losses, geometry, model.
const std::vector<std::string>& gradcheck_components();

// Central differences (step 1e-5; 1e-4 for the full model) against the
// analytic gradient of a random linear functional of the component's output.
// Entries whose stencil straddles a kink are re-measured at step / 100.
// Throws ConfigError for an unknown component.
GradReport gradcheck(const std::string& component, std::uint64_t seed);

}  // namespace gazecone::learning
