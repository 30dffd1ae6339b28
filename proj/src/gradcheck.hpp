#ifndef ALCA_GRADCHECK_HPP
#define ALCA_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace alca {

// Central-difference verification of the tape gradients, always in double
// precision. `build` must reconstruct the scalar loss from the captured leaf
// tensors; it receives a tape for the analytic pass and nullptr during the
// finite-difference evaluations.
using LossBuilder = std::function<Tensor<double>(Tape<double>*)>;

// Largest elementwise |fd - analytic| / max(1, |fd|, |analytic|) over all
// leaf elements.
double max_gradient_error(const std::vector<Tensor<double>>& leaves,
                          const LossBuilder& build, double epsilon);

struct GradCheckCase {
  std::string name;
  double max_error = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradCheckCase> cases;
  bool all_pass = true;
  double seconds = 0.0;
};

// The full verification suite: every differentiable primitive at rel. err
// <= 1e-4 plus the end-to-end tiny-model episodic loss at <= 1e-3.
GradCheckReport run_gradcheck(uint64_t seed);

std::string gradcheck_report_to_json(const GradCheckReport& report);

}  // namespace alca

#endif
