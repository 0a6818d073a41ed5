#pragma once

#include <deque>
#include <string>
#include <vector>

#include "seqattn/ops.h"
#include "seqattn/tensor.h"

namespace seqattn {

// One group of same-width convolution filters over an alignment vector.
struct FilterGroup {
  int width = 0;
  int channels = 0;
};

struct FilterBank {
  std::vector<FilterGroup> groups;

  int total_channels() const;
  void validate() const;  // non-empty, odd widths, channels >= 1
  // Widths 7/15/31/63 with 64 output channels each.
  static FilterBank wide_default();
};

// Fixed-capacity FIFO of the last `order` alignment and context vectors.
// Both queues hold exactly `order` entries at every step boundary; the
// freshest entry is at the back. A parallel feature queue caches the
// multiscale features of each stored alignment (filled lazily by the
// combined scorer, null until then).
class AttentionHistory {
 public:
  AttentionHistory() = default;

  // order copies of the one-hot [1,0,...,0] over `positions`, and order
  // zero vectors of ctx_dim.
  static AttentionHistory init(int order, int positions, int ctx_dim);

  // Evicts the oldest entry and appends the newest. align must sum to 1
  // within 1e-4.
  void step(const TensorPtr& align, const TensorPtr& ctx);

  int order() const { return order_; }
  bool initialized() const { return order_ > 0; }
  const std::deque<TensorPtr>& aligns() const { return aligns_; }
  const std::deque<TensorPtr>& ctxs() const { return ctxs_; }
  std::deque<TensorPtr>& features() { return features_; }

 private:
  int order_ = 0;
  std::deque<TensorPtr> aligns_;
  std::deque<TensorPtr> ctxs_;
  std::deque<TensorPtr> features_;
};

AttentionHistory history_init(int order, int positions, int ctx_dim);
void history_step(AttentionHistory& hist, const TensorPtr& align, const TensorPtr& ctx);

// --- scoring primitives ----------------------------------------------------

// sum_m hE_s[m] * hD[m]; requires equal dimensions.
TensorPtr score_dot(Tape& tape, const TensorPtr& hE_s, const TensorPtr& hD);

// hE_s^T W hD with W of shape [M,N].
TensorPtr score_bilinear(Tape& tape, const TensorPtr& hE_s, const TensorPtr& hD,
                         const TensorPtr& W);

struct MlpScoreParams {
  TensorPtr enc_W;  // [P,M]
  TensorPtr dec_W;  // [P,N]
  TensorPtr out_W;  // [1,P]
};

TensorPtr score_mlp(Tape& tape, const TensorPtr& hE_s, const TensorPtr& hD,
                    const MlpScoreParams& p);

struct LocationScoreParams {
  TensorPtr enc_W;       // [P,M]
  TensorPtr dec_W;       // [P,N]
  TensorPtr loc_filter;  // [1,width,C]
  TensorPtr loc_W;       // [P,C]
  TensorPtr bias;        // [P]
  TensorPtr out_W;       // [1,P]
};

// Location-aware score at `position`, convolving the single most recent
// alignment.
TensorPtr score_location(Tape& tape, const TensorPtr& hE_s, const TensorPtr& hD,
                         const TensorPtr& prev_align, int position,
                         const LocationScoreParams& p);

struct CombinedScoreParams {
  TensorPtr enc_W;     // [P,M]
  TensorPtr dec_W;     // [P,N]
  TensorPtr align_W;   // [P, total filter channels]
  TensorPtr ctxsum_W;  // [P,Pctx]
  TensorPtr bias;      // [P]
  TensorPtr out_W;     // [1,P]
};

// Combined score from encoder state, decoder state, one row of the merged
// multiscale features, and the context-history summary.
TensorPtr score_combined(Tape& tape, const TensorPtr& hE_s, const TensorPtr& hD,
                         const TensorPtr& align_feat_row, const TensorPtr& ctx_feat,
                         const CombinedScoreParams& p);

// Multi-width convolution of one alignment vector; per-group "same"
// convolutions concatenated along the channel axis, then LeakyReLU.
// filters[k] has shape [1, width_k, channels_k].
TensorPtr multiscale_features(Tape& tape, const TensorPtr& align,
                              const std::vector<TensorPtr>& filters,
                              double slope = kLeakyReluSlope);

// Convex mixture over history lags: sum_i mixture[i] * features[i].
// features[0] is the most recent lag.
TensorPtr merge_alignment_history(Tape& tape, const std::vector<TensorPtr>& features,
                                  const TensorPtr& mixture);

// LeakyReLU(sum_i lag_W[i] contexts[i] + lag_b[i]); contexts[0] is the most
// recent context vector.
TensorPtr context_history_features(Tape& tape, const std::vector<TensorPtr>& contexts,
                                   const std::vector<TensorPtr>& lag_W,
                                   const std::vector<TensorPtr>& lag_b,
                                   double slope = kLeakyReluSlope);

struct Attended {
  TensorPtr align;    // [S], masked tail exactly 0
  TensorPtr context;  // [M]
};

// Masked softmax over scores followed by the expected encoder state.
Attended attend(Tape& tape, const TensorPtr& hE, const TensorPtr& scores, const Mask& mask);

// --- scorer ------------------------------------------------------------------

enum class ScorerKind { Dot, Bilinear, Mlp, MlpLocation, MlpMaC };

ScorerKind scorer_kind_from_string(const std::string& s);
std::string to_string(ScorerKind kind);

struct ScorerConfig {
  ScorerKind kind = ScorerKind::MlpMaC;
  int order = 3;       // history depth used by the combined scorer
  int proj = 64;       // hidden units of the scoring MLP
  int ctx_proj = 64;   // context-history summary width
  FilterBank bank = FilterBank::wide_default();
  int location_width = 15;
  int location_channels = 8;
};

// All scorer variants behind one interface. Parameters register in the
// supplied ParamMap under "scorer.*".
class Scorer {
 public:
  Scorer() = default;
  Scorer(const ScorerConfig& config, int enc_dim, int dec_dim, Rng& rng, ParamMap& params);

  ScorerKind kind() const { return config_.kind; }
  int order() const { return config_.order; }
  const ScorerConfig& config() const { return config_; }

  // Per-utterance cache of encoder-side projections shared across steps.
  struct Cache {
    TensorPtr enc_proj;  // [S,P] for MLP-family scorers, null otherwise
  };
  Cache make_cache(Tape& tape, const TensorPtr& hE) const;

  // Scores over every encoder position (masking happens downstream in
  // attend). The combined scorer reads and caches multiscale features
  // inside `hist`.
  TensorPtr scores(Tape& tape, const TensorPtr& hE, const TensorPtr& hD,
                   AttentionHistory& hist, const Cache& cache) const;

  // Mixture over history lags (most recent first); combined scorer only.
  TensorPtr lag_mixture(Tape& tape) const;

  // parameters (owned via ParamMap; unused members stay null)
  TensorPtr bilinear_W;
  TensorPtr enc_W, dec_W, out_W, bias;
  TensorPtr loc_filter, loc_W;
  TensorPtr align_W, ctxsum_W;
  std::vector<TensorPtr> filters;          // one per bank group
  std::vector<TensorPtr> ctx_W, ctx_b;     // one per history lag
  TensorPtr mix_logits;                    // [order]

 private:
  ScorerConfig config_;
};

}  // namespace seqattn
