#include "mimae/gradcheck.hpp"

#include <cmath>
#include <sstream>

namespace mimae {

std::string GradCheckReport::summary() const {
  std::ostringstream os;
  os << "max rel err " << max_rel_err << " at param " << worst_param << " coord " << worst_coord
     << " (analytic " << analytic << ", numeric " << numeric << ")";
  return os.str();
}

GradCheckReport grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                           const std::vector<Tensor>& point, double h, double denom_floor) {
  if (h <= 0.0) throw ContractError("grad_check: h must be positive");

  std::vector<Tensor> params;
  params.reserve(point.size());
  for (const Tensor& p : point) params.push_back(Tensor::param(p.shape(), p.values()));

  Tensor loss = f(params);
  if (loss.size() != 1) throw ContractError("grad_check: function must be scalar-valued");
  backward(loss);

  GradCheckReport report;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    const std::vector<float> analytic = params[pi].grad_or_zeros();
    for (size_t ci = 0; ci < analytic.size(); ++ci) {
      auto& pv = params[pi].mutable_values();
      const float orig = pv[ci];
      pv[ci] = float(double(orig) + h);
      const double f_plus = double(f(params).item());
      pv[ci] = float(double(orig) - h);
      const double f_minus = double(f(params).item());
      pv[ci] = orig;
      const double numeric = (f_plus - f_minus) / (2.0 * h);
      const double a = double(analytic[ci]);
      const double denom = std::max({std::abs(a), std::abs(numeric), denom_floor});
      const double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = pi;
        report.worst_coord = ci;
        report.analytic = a;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace mimae
