#include "seqattn/metrics.h"

#include <algorithm>
#include <cmath>

#include "seqattn/error.h"

namespace seqattn {

double edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = j;
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return static_cast<double>(prev[m]);
}

double cer(const std::vector<int>& hyp, const std::vector<int>& ref) {
  if (ref.empty()) throw MetricError("cer: empty reference");
  return edit_distance(hyp, ref) / static_cast<double>(ref.size()) * 100.0;
}

L2Result l2_metric(const TensorPtr& pred, const TensorPtr& target) {
  if (!pred || !target || pred->rank() != 2 || target->rank() != 2 ||
      pred->dim(1) != target->dim(1)) {
    throw MetricError("l2_metric: expected frame matrices with a common dimension");
  }
  L2Result out;
  out.pred_frames = pred->dim(0);
  out.target_frames = target->dim(0);
  out.overlap = std::min(out.pred_frames, out.target_frames);
  if (out.overlap == 0) throw MetricError("l2_metric: no overlapping frames");
  const int dim = pred->dim(1);
  double total = 0.0;
  for (int s = 0; s < out.overlap; ++s) {
    double d2 = 0.0;
    for (int d = 0; d < dim; ++d) {
      const double diff = pred->data[static_cast<std::size_t>(s) * dim + d] -
                          target->data[static_cast<std::size_t>(s) * dim + d];
      d2 += diff * diff;
    }
    total += d2;
  }
  out.value = total / out.overlap;
  return out;
}

AttentionDiagnostics diagnostics(const TensorPtr& align_matrix, double slack) {
  if (!align_matrix || align_matrix->rank() != 2) {
    throw ContractError("diagnostics: expected a [T,S'] alignment matrix");
  }
  const int steps = align_matrix->dim(0);
  const int positions = align_matrix->dim(1);
  AttentionDiagnostics out;
  out.entropy.reserve(static_cast<std::size_t>(steps));
  double prev_expected = 0.0;
  double max_expected = 0.0;
  for (int t = 0; t < steps; ++t) {
    const double* a = align_matrix->data.data() + static_cast<std::size_t>(t) * positions;
    double sum = 0.0, entropy = 0.0, expected = 0.0;
    for (int s = 0; s < positions; ++s) {
      sum += a[s];
      if (a[s] > 0.0) entropy -= a[s] * std::log(a[s]);
      expected += (s + 1.0) * a[s];  // 1-based position
    }
    if (std::abs(sum - 1.0) > 1e-4) {
      throw ContractError("diagnostics: row " + std::to_string(t) + " sums to " +
                          std::to_string(sum));
    }
    out.entropy.push_back(entropy);
    if (t > 0 && expected < prev_expected - slack) ++out.monotonicity_violations;
    prev_expected = expected;
    max_expected = std::max(max_expected, expected);
  }
  out.terminal_coverage = max_expected / positions;
  return out;
}

}  // namespace seqattn
