#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace crt {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  double step = 1e-5;
  double tolerance = 1e-4;
  // Gradients smaller than this are compared on an absolute scale. Central
  // differences at h = 1e-5 carry roughly 1e-10 of rounding noise.
  double magnitude_floor = 1e-5;
};

struct GroupCheck {
  std::string name;
  std::size_t elements = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GroupCheck> groups;  // one per parameter tensor, store order

  bool passed() const;
  double max_relative_error() const;
};

// Central finite differences against the tape gradient of the teacher-forced
// loss, over every element of every parameter of a tiny random model
// (d_model 16, one layer, two heads, four regions, five tokens).
// Relative error is |a − n| / max(|a|, |n|, magnitude_floor).
GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace crt
