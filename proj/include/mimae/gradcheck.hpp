#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mimae/tensor.hpp"

namespace mimae {

struct GradCheckReport {
  double max_rel_err = 0.0;
  size_t worst_param = 0;
  size_t worst_coord = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::string summary() const;
};

// Compares the analytic gradient of a scalar-valued function against central
// differences (f(x+h) - f(x-h)) / 2h at the given point. The relative error
// denominator is floored at `denom_floor` so that coordinates whose gradient
// sits below f32 finite-difference noise are judged on absolute error.
GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                           const std::vector<Tensor>& point, double h = 1e-2,
                           double denom_floor = 0.1);

}  // namespace mimae
