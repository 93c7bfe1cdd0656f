#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hires {

// Named finite-difference checks over every differentiable op, runnable from
// the command line. Primitive ops are held to 1e-6 relative error in double
// precision, composed modules to 1e-4.
struct GradCheckCase {
  std::string op;
  double max_rel_err = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

std::vector<std::string> grad_check_op_names();
GradCheckCase run_grad_check_op(const std::string& op, uint64_t seed, double eps);

}  // namespace hires
