#include "seqattn/gradcheck.h"

#include <cmath>
#include <vector>

#include "seqattn/error.h"

namespace seqattn {

namespace {

double eval_loss(const std::function<TensorPtr(Tape&)>& fn, const std::string& where) {
  Tape tape(false);
  TensorPtr loss = fn(tape);
  if (!loss || loss->size() != 1) throw ContractError("grad_check: fn must return a scalar");
  const double v = loss->data[0];
  if (!std::isfinite(v)) {
    throw ContractError("grad_check: non-finite loss while perturbing " + where);
  }
  return v;
}

}  // namespace

GradCheckReport grad_check(const std::function<TensorPtr(Tape&)>& fn,
                           const std::vector<TensorPtr>& params, double h, double tol,
                           double abs_floor) {
  for (const auto& p : params) {
    if (!p || !p->requires_grad) throw ContractError("grad_check: parameters must require grad");
    p->zero_grad();
  }

  // One recorded pass supplies every analytic gradient.
  {
    Tape tape(true);
    TensorPtr loss = fn(tape);
    if (!loss || loss->size() != 1) throw ContractError("grad_check: fn must return a scalar");
    if (!std::isfinite(loss->data[0])) {
      throw ContractError("grad_check: non-finite loss at the base point");
    }
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(p->grad);

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const auto& p = params[pi];
    const std::string pname = p->name.empty() ? ("param" + std::to_string(pi)) : p->name;
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      const std::string where = pname + "[" + std::to_string(i) + "]";
      const double saved = p->data[i];
      p->data[i] = saved + h;
      const double up = eval_loss(fn, where);
      p->data[i] = saved - h;
      const double down = eval_loss(fn, where);
      p->data[i] = saved;

      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[pi][i];
      double rel = 0.0;
      if (std::abs(a - numeric) > abs_floor) {
        rel = std::abs(a - numeric) / std::max(std::abs(a), std::abs(numeric));
      }
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = {pname, static_cast<std::int64_t>(i), a, numeric, rel};
      }
    }
  }
  report.pass = report.max_rel_error <= tol;

  for (const auto& p : params) p->zero_grad();
  return report;
}

}  // namespace seqattn
