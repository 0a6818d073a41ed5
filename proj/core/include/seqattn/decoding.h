#pragma once

#include <vector>

#include "seqattn/model.h"

namespace seqattn {

// One beam-search hypothesis. `factors` counts the probability factors in
// log_likelihood (emitted symbols plus the eos step when finished).
struct Hypothesis {
  std::vector<int> symbols;
  double log_likelihood = 0.0;
  int factors = 0;
  Seq2SeqModel::DecState state;
  AttentionHistory history;
  std::vector<TensorPtr> align_rows;
  int next_input = kBosId;
  bool alive = true;

  double normalized_score() const {
    return factors > 0 ? log_likelihood / factors : -1e300;
  }
};

struct DecodeResult {
  std::vector<int> symbols;  // emitted symbols, eos excluded
  TensorPtr alignment;       // [T, S'], one row per decoder step
  bool truncated = false;
  double log_likelihood = 0.0;
  double normalized_score = 0.0;
  // normalized scores of every finished hypothesis the beam retained
  std::vector<double> finished_scores;
};

// Discrete decoding bound used when the caller gives none.
int default_max_len(int encoder_positions);

// Argmax decoding; ties break toward the lowest symbol index. Stops at eos
// or after max_len emitted symbols (flagged as truncated).
DecodeResult greedy_decode(const Seq2SeqModel& model, const TensorPtr& hE, const Mask& mask,
                           int max_len);

// Beam search. Hypotheses are pruned by cumulative log-likelihood while
// alive; finished hypotheses compete by log-likelihood divided by length.
DecodeResult beam_decode(const Seq2SeqModel& model, const TensorPtr& hE, const Mask& mask,
                         int beam, int max_len);

struct TtsInferResult {
  TensorPtr frames_m;  // [steps*r, Dm]
  TensorPtr frames_r;  // [steps*r, Dr]
  TensorPtr alignment; // [steps, S']
  bool truncated = false;
  bool stopped_by_ending = false;
};

// Free-running continuous decoding: emits frame groups until any ending
// probability in a group exceeds stop_threshold or max_frames is reached.
TtsInferResult tts_infer(const Seq2SeqModel& model, const std::vector<int>& text,
                         int max_frames, double stop_threshold = 0.5);

}  // namespace seqattn
