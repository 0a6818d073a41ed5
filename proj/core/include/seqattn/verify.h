#pragma once

#include <cstdint>

#include "seqattn/attention.h"
#include "seqattn/gradcheck.h"

namespace seqattn {

// End-to-end gradient check of a tiny random model (source length <= 8,
// every width <= 8) through encode -> attend -> teacher-forced loss, for one
// scorer variant. Zero-initialized parameters are nudged to random values so
// the check never sits exactly on an activation kink.
GradCheckReport pipeline_grad_check(ScorerKind kind, int order, std::uint64_t seed,
                                    double h = 1e-5, double tol = 1e-4);

}  // namespace seqattn
