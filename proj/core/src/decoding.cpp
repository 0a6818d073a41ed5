#include "seqattn/decoding.h"

#include <algorithm>
#include <cmath>

#include "seqattn/error.h"

namespace seqattn {

namespace {

std::vector<double> log_softmax_values(const TensorPtr& logits) {
  const int n = logits->dim(0);
  double hi = logits->data[0];
  for (int i = 1; i < n; ++i) hi = std::max(hi, logits->data[static_cast<std::size_t>(i)]);
  double z = 0.0;
  for (int i = 0; i < n; ++i) z += std::exp(logits->data[static_cast<std::size_t>(i)] - hi);
  const double lse = hi + std::log(z);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = logits->data[static_cast<std::size_t>(i)] - lse;
  return out;
}

TensorPtr stack_alignment(Tape& tape, const std::vector<TensorPtr>& rows) {
  return stack_rows(tape, rows);
}

}  // namespace

int default_max_len(int encoder_positions) { return 3 * encoder_positions; }

DecodeResult greedy_decode(const Seq2SeqModel& model, const TensorPtr& hE, const Mask& mask,
                           int max_len) {
  if (max_len < 1) throw ConfigError("greedy_decode: max_len must be >= 1");
  Tape tape(false);
  auto cache = model.scorer.make_cache(tape, hE);
  auto hist = model.initial_history(hE->dim(0));
  auto state = model.initial_state();

  DecodeResult result;
  std::vector<TensorPtr> align_rows;
  int prev = kBosId;
  while (true) {
    auto step = model.decoder_step(tape, model.embed_target(tape, prev), state, hist, hE,
                                   mask, cache);
    align_rows.push_back(step.align);
    auto logp = log_softmax_values(model.step_logits(tape, step));
    int best = 0;
    for (int i = 1; i < static_cast<int>(logp.size()); ++i) {
      if (logp[static_cast<std::size_t>(i)] > logp[static_cast<std::size_t>(best)]) best = i;
    }
    result.log_likelihood += logp[static_cast<std::size_t>(best)];
    if (best == kEosId) break;
    result.symbols.push_back(best);
    prev = best;
    if (static_cast<int>(result.symbols.size()) >= max_len) {
      result.truncated = true;
      break;
    }
  }
  const int factors = static_cast<int>(result.symbols.size()) + (result.truncated ? 0 : 1);
  result.normalized_score = factors > 0 ? result.log_likelihood / factors : 0.0;
  result.alignment = stack_alignment(tape, align_rows);
  return result;
}

DecodeResult beam_decode(const Seq2SeqModel& model, const TensorPtr& hE, const Mask& mask,
                         int beam, int max_len) {
  if (beam < 1) throw ConfigError("beam_decode: beam must be >= 1, got " + std::to_string(beam));
  if (max_len < 1) throw ConfigError("beam_decode: max_len must be >= 1");
  Tape tape(false);
  auto cache = model.scorer.make_cache(tape, hE);

  Hypothesis root;
  root.state = model.initial_state();
  root.history = model.initial_history(hE->dim(0));
  std::vector<Hypothesis> alive{std::move(root)};
  std::vector<Hypothesis> finished;

  struct Candidate {
    double score;
    int parent;
    int symbol;
  };

  for (int t = 0; t < max_len && !alive.empty(); ++t) {
    std::vector<Hypothesis> stepped;
    stepped.reserve(alive.size());
    std::vector<Candidate> candidates;
    for (std::size_t p = 0; p < alive.size(); ++p) {
      Hypothesis hyp = std::move(alive[p]);
      auto step = model.decoder_step(tape, model.embed_target(tape, hyp.next_input), hyp.state,
                                     hyp.history, hE, mask, cache);
      hyp.align_rows.push_back(step.align);
      auto logp = log_softmax_values(model.step_logits(tape, step));
      for (int v = 0; v < static_cast<int>(logp.size()); ++v) {
        candidates.push_back({hyp.log_likelihood + logp[static_cast<std::size_t>(v)],
                              static_cast<int>(p), v});
      }
      stepped.push_back(std::move(hyp));
    }
    // deterministic order: score descending, then parent, then symbol index
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.parent != b.parent) return a.parent < b.parent;
      return a.symbol < b.symbol;
    });

    std::vector<Hypothesis> next_alive;
    const int keep = std::min<std::size_t>(static_cast<std::size_t>(beam), candidates.size());
    for (int k = 0; k < keep; ++k) {
      const Candidate& c = candidates[static_cast<std::size_t>(k)];
      Hypothesis child = stepped[static_cast<std::size_t>(c.parent)];
      child.log_likelihood = c.score;
      child.factors += 1;
      if (c.symbol == kEosId) {
        child.alive = false;
        finished.push_back(std::move(child));
      } else {
        child.symbols.push_back(c.symbol);
        child.next_input = c.symbol;
        next_alive.push_back(std::move(child));
      }
    }
    alive = std::move(next_alive);
  }

  DecodeResult result;
  const Hypothesis* best = nullptr;
  for (const auto& h : finished) {
    result.finished_scores.push_back(h.normalized_score());
    if (!best || h.normalized_score() > best->normalized_score()) best = &h;
  }
  if (!best) {
    // nothing finished within max_len: fall back to the best alive hypothesis
    for (const auto& h : alive) {
      if (!best || h.normalized_score() > best->normalized_score()) best = &h;
    }
    result.truncated = true;
  }
  if (!best) throw ContractError("beam_decode: no hypotheses survived");
  result.symbols = best->symbols;
  result.log_likelihood = best->log_likelihood;
  result.normalized_score = best->normalized_score();
  result.alignment = stack_alignment(tape, best->align_rows);
  return result;
}

TtsInferResult tts_infer(const Seq2SeqModel& model, const std::vector<int>& text,
                         int max_frames, double stop_threshold) {
  if (!model.config.continuous()) throw ContractError("tts_infer needs a continuous decoder");
  if (stop_threshold <= 0.0 || stop_threshold >= 1.0) {
    throw ConfigError("stop threshold must lie in (0,1)");
  }
  if (max_frames < 1) throw ConfigError("tts_infer: max_frames must be >= 1");

  Tape tape(false);
  auto [hE, mask] = model.encode_symbols(tape, text);
  auto cache = model.scorer.make_cache(tape, hE);
  auto hist = model.initial_history(hE->dim(0));
  auto state = model.initial_state();

  const int r = model.config.frames_per_step;
  const int dm = model.config.frame_dim_m;
  TtsInferResult result;
  std::vector<TensorPtr> frame_rows_m, frame_rows_r, align_rows;
  TensorPtr prev_frame = Tensor::create({dm});

  int emitted = 0;
  while (true) {
    auto step = model.tts_decoder_step(tape, prev_frame, state, hist, hE, mask, cache);
    align_rows.push_back(step.att.align);
    for (int j = 0; j < r; ++j) {
      frame_rows_m.push_back(row(tape, step.frames_m, j));
      frame_rows_r.push_back(row(tape, step.frames_r, j));
    }
    emitted += r;
    bool stop = false;
    for (int j = 0; j < r; ++j) {
      if (step.end_probs->data[static_cast<std::size_t>(j)] > stop_threshold) stop = true;
    }
    if (stop) {
      result.stopped_by_ending = true;
      break;
    }
    if (emitted >= max_frames) {
      result.truncated = true;
      break;
    }
    prev_frame = row(tape, step.frames_m, r - 1);
  }

  result.frames_m = stack_rows(tape, frame_rows_m);
  result.frames_r = stack_rows(tape, frame_rows_r);
  result.alignment = stack_rows(tape, align_rows);
  return result;
}

}  // namespace seqattn
