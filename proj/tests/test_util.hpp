#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "mimae/tensor.hpp"

namespace mimae::testutil {

// In-place central-difference check over live leaf parameters (model
// weights). Relative error uses the same 0.1 denominator floor as
// grad_check so near-zero coordinates are judged on absolute error.
struct FdOutcome {
  double max_rel_err = 0.0;
  double analytic = 0.0;
  double numeric = 0.0;
};

inline FdOutcome fd_check_params(const std::function<Tensor()>& forward,
                                 const std::vector<Tensor>& params, double h = 1e-2,
                                 int stride = 1) {
  for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();
  Tensor loss = forward();
  backward(loss);
  std::vector<std::vector<float>> grads;
  for (const Tensor& p : params) grads.push_back(p.grad_or_zeros());

  FdOutcome out;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto& vals = const_cast<Tensor&>(params[pi]).mutable_values();
    for (size_t ci = 0; ci < vals.size(); ci += size_t(stride)) {
      const float orig = vals[ci];
      vals[ci] = float(double(orig) + h);
      const double fp = double(forward().item());
      vals[ci] = float(double(orig) - h);
      const double fm = double(forward().item());
      vals[ci] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double analytic = double(grads[pi][ci]);
      const double rel = std::abs(analytic - numeric) /
                         std::max({std::abs(analytic), std::abs(numeric), 0.1});
      if (rel > out.max_rel_err) {
        out.max_rel_err = rel;
        out.analytic = analytic;
        out.numeric = numeric;
      }
    }
  }
  for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();
  return out;
}

inline double max_abs(const std::vector<float>& v) {
  double m = 0;
  for (float x : v) m = std::max(m, double(std::abs(x)));
  return m;
}

}  // namespace mimae::testutil
