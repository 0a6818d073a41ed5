#pragma once

#include <functional>
#include <string>
#include <vector>

#include "seqattn/tensor.h"

namespace seqattn {

struct GradCheckEntry {
  std::string param;
  std::int64_t index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  bool pass = true;
  double max_rel_error = 0.0;
  std::int64_t checked = 0;
  GradCheckEntry worst;
};

// Compares reverse-mode gradients of a scalar-valued function against central
// differences (f(t+h) - f(t-h)) / 2h for every entry of every parameter.
// fn must rebuild the forward pass from scratch on each call and be
// deterministic. Entries where |analytic - numeric| <= abs_floor count as
// exact; otherwise the error is |a-n| / max(|a|, |n|).
GradCheckReport grad_check(const std::function<TensorPtr(Tape&)>& fn,
                           const std::vector<TensorPtr>& params, double h = 1e-5,
                           double tol = 1e-4, double abs_floor = 1e-8);

}  // namespace seqattn
