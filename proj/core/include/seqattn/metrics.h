#pragma once

#include <vector>

#include "seqattn/tensor.h"

namespace seqattn {

// Unit-cost edit distance.
double edit_distance(const std::vector<int>& a, const std::vector<int>& b);

// Character error rate in percent: edit distance / reference length * 100.
double cer(const std::vector<int>& hyp, const std::vector<int>& ref);

struct L2Result {
  double value = 0.0;   // mean squared Euclidean distance per frame
  int pred_frames = 0;
  int target_frames = 0;
  int overlap = 0;      // frames compared after truncation to the shorter
};

// Mean over frames of the squared distance between prediction and target,
// truncated to the shorter sequence.
L2Result l2_metric(const TensorPtr& pred, const TensorPtr& target);

struct AttentionDiagnostics {
  std::vector<double> entropy;       // per decoder step, in [0, ln S']
  int monotonicity_violations = 0;   // steps where the expected position
                                     // falls by more than the slack
  double terminal_coverage = 0.0;    // max expected position / S', in (0,1]
};

// Quantitative summary of a [T,S'] alignment matrix. Rows must sum to 1
// within 1e-4.
AttentionDiagnostics diagnostics(const TensorPtr& align_matrix, double slack = 2.0);

}  // namespace seqattn
