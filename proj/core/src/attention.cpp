#include "seqattn/attention.h"

#include <cmath>
#include <string>

#include "seqattn/error.h"

namespace seqattn {

int FilterBank::total_channels() const {
  int n = 0;
  for (const auto& g : groups) n += g.channels;
  return n;
}

void FilterBank::validate() const {
  if (groups.empty()) throw ConfigError("filter bank has no groups");
  for (const auto& g : groups) {
    if (g.width < 1 || g.width % 2 == 0) {
      throw ConfigError("filter width must be odd and positive, got " + std::to_string(g.width));
    }
    if (g.channels < 1) {
      throw ConfigError("filter group needs at least one channel, got " +
                        std::to_string(g.channels));
    }
  }
}

FilterBank FilterBank::wide_default() {
  return FilterBank{{{7, 64}, {15, 64}, {31, 64}, {63, 64}}};
}

AttentionHistory AttentionHistory::init(int order, int positions, int ctx_dim) {
  if (order < 1) throw ConfigError("history order must be >= 1, got " + std::to_string(order));
  if (positions < 1) throw ConfigError("history needs at least one position");
  AttentionHistory h;
  h.order_ = order;
  for (int i = 0; i < order; ++i) {
    h.aligns_.push_back(Tensor::one_hot(positions, 0));
    h.ctxs_.push_back(Tensor::create({ctx_dim}));
    h.features_.push_back(nullptr);
  }
  return h;
}

void AttentionHistory::step(const TensorPtr& align, const TensorPtr& ctx) {
  if (order_ < 1) throw ContractError("history_step on uninitialized history");
  if (!align || !ctx) throw ContractError("history_step: null entry");
  double sum = 0.0;
  for (double v : align->data) sum += v;
  if (std::abs(sum - 1.0) > 1e-4) {
    throw ContractError("history_step: alignment sums to " + std::to_string(sum) +
                        ", expected 1");
  }
  aligns_.pop_front();
  ctxs_.pop_front();
  features_.pop_front();
  aligns_.push_back(align);
  ctxs_.push_back(ctx);
  features_.push_back(nullptr);
}

AttentionHistory history_init(int order, int positions, int ctx_dim) {
  return AttentionHistory::init(order, positions, ctx_dim);
}

void history_step(AttentionHistory& hist, const TensorPtr& align, const TensorPtr& ctx) {
  hist.step(align, ctx);
}

namespace {

// Shared tail of every MLP-family scorer: out_W tanh(enc_proj + dvec per row).
TensorPtr mlp_core(Tape& tape, const TensorPtr& enc_proj, const TensorPtr& dvec,
                   const TensorPtr& out_W) {
  auto pre = add_rowvec(tape, enc_proj, dvec);
  auto hidden = activation(tape, pre, Act::Tanh);
  auto scores = affine(tape, hidden, out_W);
  return reshape(tape, scores, {enc_proj->dim(0)});
}

TensorPtr as_matrix_row(Tape& tape, const TensorPtr& v) {
  return reshape(tape, v, {1, v->dim(0)});
}

}  // namespace

TensorPtr score_dot(Tape& tape, const TensorPtr& hE_s, const TensorPtr& hD) {
  if (!hE_s || !hD || hE_s->rank() != 1 || hD->rank() != 1 || hE_s->dim(0) != hD->dim(0)) {
    throw DimensionError("score_dot requires equal sizes: " +
                         (hE_s ? shape_str(hE_s->shape) : "null") + " vs " +
                         (hD ? shape_str(hD->shape) : "null"));
  }
  return dot(tape, hE_s, hD);
}

TensorPtr score_bilinear(Tape& tape, const TensorPtr& hE_s, const TensorPtr& hD,
                         const TensorPtr& W) {
  auto projected = affine(tape, hD, W);  // [M]
  return dot(tape, hE_s, projected);
}

TensorPtr score_mlp(Tape& tape, const TensorPtr& hE_s, const TensorPtr& hD,
                    const MlpScoreParams& p) {
  auto enc_proj = affine(tape, as_matrix_row(tape, hE_s), p.enc_W);
  auto dvec = affine(tape, hD, p.dec_W);
  return mlp_core(tape, enc_proj, dvec, p.out_W);
}

TensorPtr score_location(Tape& tape, const TensorPtr& hE_s, const TensorPtr& hD,
                         const TensorPtr& prev_align, int position,
                         const LocationScoreParams& p) {
  if (!prev_align || prev_align->rank() != 1) {
    throw DimensionError("score_location: previous alignment must be a vector");
  }
  const int steps = prev_align->dim(0);
  if (position < 0 || position >= steps) {
    throw DimensionError("score_location: position " + std::to_string(position) +
                         " outside alignment of length " + std::to_string(steps));
  }
  auto conv = conv1d_same(tape, reshape(tape, prev_align, {steps, 1}), p.loc_filter);
  auto loc_row = narrow0(tape, conv, position, 1);  // [1,C]
  auto enc_proj = add(tape, affine(tape, as_matrix_row(tape, hE_s), p.enc_W),
                      affine(tape, loc_row, p.loc_W));
  auto dvec = add(tape, affine(tape, hD, p.dec_W), p.bias);
  return mlp_core(tape, enc_proj, dvec, p.out_W);
}

TensorPtr score_combined(Tape& tape, const TensorPtr& hE_s, const TensorPtr& hD,
                         const TensorPtr& align_feat_row, const TensorPtr& ctx_feat,
                         const CombinedScoreParams& p) {
  auto enc_proj = add(tape, affine(tape, as_matrix_row(tape, hE_s), p.enc_W),
                      affine(tape, as_matrix_row(tape, align_feat_row), p.align_W));
  auto dvec = add_all(tape, {affine(tape, hD, p.dec_W), affine(tape, ctx_feat, p.ctxsum_W),
                             p.bias});
  return mlp_core(tape, enc_proj, dvec, p.out_W);
}

TensorPtr multiscale_features(Tape& tape, const TensorPtr& align,
                              const std::vector<TensorPtr>& filters, double slope) {
  if (filters.empty()) throw ConfigError("multiscale_features: empty filter bank");
  if (!align || align->rank() != 1) {
    throw DimensionError("multiscale_features: alignment must be a vector");
  }
  auto column = reshape(tape, align, {align->dim(0), 1});
  std::vector<TensorPtr> outputs;
  outputs.reserve(filters.size());
  for (const auto& f : filters) outputs.push_back(conv1d_same(tape, column, f));
  auto stacked = concat_cols(tape, outputs);
  return activation(tape, stacked, Act::LeakyRelu, slope);
}

TensorPtr merge_alignment_history(Tape& tape, const std::vector<TensorPtr>& features,
                                  const TensorPtr& mixture) {
  if (!mixture || mixture->rank() != 1 ||
      mixture->dim(0) != static_cast<int>(features.size())) {
    throw HistoryError("merge_alignment_history: " + std::to_string(features.size()) +
                       " feature sets do not match mixture of " +
                       (mixture ? std::to_string(mixture->dim(0)) : std::string("null")));
  }
  return mix(tape, features, mixture);
}

TensorPtr context_history_features(Tape& tape, const std::vector<TensorPtr>& contexts,
                                   const std::vector<TensorPtr>& lag_W,
                                   const std::vector<TensorPtr>& lag_b, double slope) {
  if (contexts.size() != lag_W.size() || contexts.size() != lag_b.size()) {
    throw HistoryError("context_history_features: " + std::to_string(contexts.size()) +
                       " contexts vs " + std::to_string(lag_W.size()) + " lag weights");
  }
  if (contexts.empty()) throw HistoryError("context_history_features: empty history");
  std::vector<TensorPtr> terms;
  terms.reserve(contexts.size());
  for (std::size_t i = 0; i < contexts.size(); ++i) {
    terms.push_back(affine(tape, contexts[i], lag_W[i], lag_b[i]));
  }
  return activation(tape, add_all(tape, terms), Act::LeakyRelu, slope);
}

Attended attend(Tape& tape, const TensorPtr& hE, const TensorPtr& scores, const Mask& mask) {
  if (!hE || hE->rank() != 2 || !scores || scores->rank() != 1 ||
      scores->dim(0) != hE->dim(0)) {
    throw DimensionError("attend: states " + (hE ? shape_str(hE->shape) : "null") +
                         " vs scores " + (scores ? shape_str(scores->shape) : "null"));
  }
  Attended out;
  out.align = softmax_masked(tape, scores, mask);
  out.context = attend_context(tape, hE, out.align);
  return out;
}

ScorerKind scorer_kind_from_string(const std::string& s) {
  if (s == "dot") return ScorerKind::Dot;
  if (s == "bilinear") return ScorerKind::Bilinear;
  if (s == "mlp") return ScorerKind::Mlp;
  if (s == "mlp-loc") return ScorerKind::MlpLocation;
  if (s == "mlp-ma-c") return ScorerKind::MlpMaC;
  throw ConfigError("unknown scorer variant: " + s);
}

std::string to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::Dot: return "dot";
    case ScorerKind::Bilinear: return "bilinear";
    case ScorerKind::Mlp: return "mlp";
    case ScorerKind::MlpLocation: return "mlp-loc";
    case ScorerKind::MlpMaC: return "mlp-ma-c";
  }
  return "?";
}

Scorer::Scorer(const ScorerConfig& config, int enc_dim, int dec_dim, Rng& rng,
               ParamMap& params)
    : config_(config) {
  if (config_.order < 1) throw ConfigError("scorer history order must be >= 1");
  const int P = config_.proj;
  switch (config_.kind) {
    case ScorerKind::Dot:
      if (enc_dim != dec_dim) {
        throw ConfigError("dot scorer needs equal encoder/decoder dims, got " +
                          std::to_string(enc_dim) + " vs " + std::to_string(dec_dim));
      }
      break;
    case ScorerKind::Bilinear:
      bilinear_W = params.add("scorer.bilinear_W",
                              init_uniform({enc_dim, dec_dim}, dec_dim, enc_dim, rng));
      break;
    case ScorerKind::Mlp:
      enc_W = params.add("scorer.enc_W", init_uniform({P, enc_dim}, enc_dim, P, rng));
      dec_W = params.add("scorer.dec_W", init_uniform({P, dec_dim}, dec_dim, P, rng));
      out_W = params.add("scorer.out_W", init_uniform({1, P}, P, 1, rng));
      break;
    case ScorerKind::MlpLocation: {
      if (config_.location_width < 1 || config_.location_width % 2 == 0) {
        throw ConfigError("location filter width must be odd");
      }
      const int C = config_.location_channels;
      enc_W = params.add("scorer.enc_W", init_uniform({P, enc_dim}, enc_dim, P, rng));
      dec_W = params.add("scorer.dec_W", init_uniform({P, dec_dim}, dec_dim, P, rng));
      loc_filter = params.add("scorer.loc_filter",
                              init_uniform({1, config_.location_width, C},
                                           config_.location_width, C, rng));
      loc_W = params.add("scorer.loc_W", init_uniform({P, C}, C, P, rng));
      bias = params.add("scorer.bias", Tensor::create({P}));
      out_W = params.add("scorer.out_W", init_uniform({1, P}, P, 1, rng));
      break;
    }
    case ScorerKind::MlpMaC: {
      config_.bank.validate();
      const int total = config_.bank.total_channels();
      enc_W = params.add("scorer.enc_W", init_uniform({P, enc_dim}, enc_dim, P, rng));
      dec_W = params.add("scorer.dec_W", init_uniform({P, dec_dim}, dec_dim, P, rng));
      align_W = params.add("scorer.align_W", init_uniform({P, total}, total, P, rng));
      ctxsum_W = params.add("scorer.ctxsum_W",
                            init_uniform({P, config_.ctx_proj}, config_.ctx_proj, P, rng));
      bias = params.add("scorer.bias", Tensor::create({P}));
      out_W = params.add("scorer.out_W", init_uniform({1, P}, P, 1, rng));
      for (std::size_t k = 0; k < config_.bank.groups.size(); ++k) {
        const auto& g = config_.bank.groups[k];
        filters.push_back(params.add("scorer.filter" + std::to_string(k),
                                     init_uniform({1, g.width, g.channels}, g.width,
                                                  g.channels, rng)));
      }
      for (int i = 0; i < config_.order; ++i) {
        ctx_W.push_back(params.add("scorer.ctx_W" + std::to_string(i),
                                   init_uniform({config_.ctx_proj, enc_dim}, enc_dim,
                                                config_.ctx_proj, rng)));
        ctx_b.push_back(params.add("scorer.ctx_b" + std::to_string(i),
                                   Tensor::create({config_.ctx_proj})));
      }
      // Equal logits -> uniform mixture over the history lags.
      mix_logits = params.add("scorer.mix_logits", Tensor::create({config_.order}));
      break;
    }
  }
}

Scorer::Cache Scorer::make_cache(Tape& tape, const TensorPtr& hE) const {
  Cache cache;
  if (enc_W) cache.enc_proj = affine(tape, hE, enc_W);
  return cache;
}

TensorPtr Scorer::lag_mixture(Tape& tape) const {
  if (!mix_logits) throw ContractError("lag_mixture: scorer has no history mixture");
  return softmax(tape, mix_logits);
}

TensorPtr Scorer::scores(Tape& tape, const TensorPtr& hE, const TensorPtr& hD,
                         AttentionHistory& hist, const Cache& cache) const {
  switch (config_.kind) {
    case ScorerKind::Dot:
      return matvec(tape, hE, hD);
    case ScorerKind::Bilinear:
      return matvec(tape, hE, affine(tape, hD, bilinear_W));
    case ScorerKind::Mlp:
      return mlp_core(tape, cache.enc_proj, affine(tape, hD, dec_W), out_W);
    case ScorerKind::MlpLocation: {
      if (!hist.initialized()) throw ContractError("location scorer: uninitialized history");
      const TensorPtr& prev = hist.aligns().back();
      auto conv = conv1d_same(tape, reshape(tape, prev, {prev->dim(0), 1}), loc_filter);
      auto enc_proj = add(tape, cache.enc_proj, affine(tape, conv, loc_W));
      auto dvec = add(tape, affine(tape, hD, dec_W), bias);
      return mlp_core(tape, enc_proj, dvec, out_W);
    }
    case ScorerKind::MlpMaC: {
      if (!hist.initialized()) throw ContractError("combined scorer: uninitialized history");
      if (hist.order() != config_.order) {
        throw HistoryError("combined scorer expects history order " +
                           std::to_string(config_.order) + ", got " +
                           std::to_string(hist.order()));
      }
      // Fill missing feature cache entries for the current queue contents.
      auto& feats = hist.features();
      for (std::size_t i = 0; i < feats.size(); ++i) {
        if (!feats[i]) feats[i] = multiscale_features(tape, hist.aligns()[i], filters);
      }
      // Most recent lag first, matching the mixture and lag-weight order.
      std::vector<TensorPtr> recent_first(feats.rbegin(), feats.rend());
      std::vector<TensorPtr> ctx_recent_first(hist.ctxs().rbegin(), hist.ctxs().rend());
      auto merged = merge_alignment_history(tape, recent_first, lag_mixture(tape));
      auto ctx_summary = context_history_features(tape, ctx_recent_first, ctx_W, ctx_b);
      auto enc_proj = add(tape, cache.enc_proj, affine(tape, merged, align_W));
      auto dvec = add_all(tape, {affine(tape, hD, dec_W),
                                 affine(tape, ctx_summary, ctxsum_W), bias});
      return mlp_core(tape, enc_proj, dvec, out_W);
    }
  }
  throw ConfigError("unknown scorer kind");
}

}  // namespace seqattn
