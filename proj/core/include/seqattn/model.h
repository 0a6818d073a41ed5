#pragma once

#include <utility>
#include <vector>

#include "seqattn/attention.h"
#include "seqattn/ops.h"
#include "seqattn/tensor.h"

namespace seqattn {

// Reserved symbol ids in every discrete vocabulary.
constexpr int kPadId = 0;
constexpr int kBosId = 1;
constexpr int kEosId = 2;
constexpr int kReservedSymbols = 3;

struct ModelConfig {
  // source side: discrete symbols (src_vocab > 0) or raw frames of src_dim
  int src_vocab = 0;
  int src_dim = 0;
  int src_emb = 32;

  // encoder: input projection + LeakyReLU, then bidirectional recurrent
  // layers of enc_hidden/2 units per direction; subsample[i] in {1,2}
  int enc_hidden = 64;
  std::vector<int> subsample = {1, 2, 2};

  // decoder
  int dec_hidden = 64;
  int dec_layers = 1;
  int emb_dim = 32;      // target embedding (discrete) or pre-net width
  int tgt_vocab = 0;     // 0 -> continuous frame decoder
  int frame_dim_m = 0;   // primary frame stream
  int frame_dim_r = 0;   // secondary frame stream
  int frames_per_step = 4;

  ScorerConfig scorer;

  bool continuous() const { return tgt_vocab == 0; }
  int reduction() const;
  void validate() const;
};

struct LstmCell {
  TensorPtr W;  // [4U, X+U], gate order: input, forget, output, candidate
  TensorPtr b;  // [4U]
  int units = 0;

  LstmCell() = default;
  LstmCell(const std::string& prefix, int input_dim, int units, Rng& rng, ParamMap& params);

  struct State {
    TensorPtr h, c;
  };
  State initial() const;
  State step(Tape& tape, const TensorPtr& input, const State& prev) const;
};

// Input projection + LeakyReLU, bidirectional recurrent layers, and
// keep-every-second-output subsampling.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const ModelConfig& config, int input_dim, Rng& rng, ParamMap& params);

  // Returns the encoder state matrix and the shortened mask. Only the valid
  // prefix of the input is processed; padded output rows are zero.
  std::pair<TensorPtr, Mask> forward(Tape& tape, const TensorPtr& frames,
                                     const Mask& mask) const;

  int output_dim() const { return hidden_; }
  int reduction() const;
  // Length after the per-layer keep-every-second-output stages.
  int reduced_length(int length) const;

 private:
  TensorPtr in_W, in_b;
  struct Layer {
    LstmCell fwd, bwd;
    int factor = 1;
  };
  std::vector<Layer> layers_;
  int hidden_ = 0;
};

// Frame targets of a continuous-mode example: two frame streams plus the
// per-frame ending bits (0 until generation should stop, then 1).
struct TtsTargets {
  TensorPtr frames_m;           // [S, Dm]
  TensorPtr frames_r;           // [S, Dr]
  std::vector<double> ending;   // size S, exactly one 0->1 transition
  void validate() const;
};

class Seq2SeqModel {
 public:
  Seq2SeqModel() = default;
  Seq2SeqModel(const ModelConfig& config, Rng& rng);

  ModelConfig config;
  ParamMap params;
  Encoder encoder;
  Scorer scorer;

  // discrete source
  TensorPtr src_embedding;  // [src_vocab, src_emb]
  // discrete target head
  TensorPtr tgt_embedding;  // [tgt_vocab, emb_dim]
  TensorPtr out_W, out_b;   // softmax head over [hD; c]
  // continuous target head
  TensorPtr prenet_W, prenet_b;  // frame -> pre-net input
  TensorPtr frame_W, frame_b;    // [r*(Dm+Dr), N+M]
  TensorPtr end_W, end_b;        // [r, N+M]

  std::vector<LstmCell> dec_cells;

  std::int64_t param_count() const { return params.total_size(); }

  std::pair<TensorPtr, Mask> encode_symbols(Tape& tape, const std::vector<int>& src) const;
  std::pair<TensorPtr, Mask> encode_frames(Tape& tape, const TensorPtr& frames,
                                           const Mask& mask) const;

  struct DecState {
    std::vector<LstmCell::State> layers;
  };
  DecState initial_state() const;
  AttentionHistory initial_history(int positions) const;

  TensorPtr embed_target(Tape& tape, int symbol) const;

  struct StepOut {
    TensorPtr align;    // [S']
    TensorPtr context;  // [M]
    TensorPtr head_in;  // [N+M]
  };
  // One decoder step: recurrent update, attention scores over all encoder
  // positions, attend, then history pop/push. History features are read
  // from the queue state before the new alignment is pushed.
  StepOut decoder_step(Tape& tape, const TensorPtr& input, DecState& state,
                       AttentionHistory& hist, const TensorPtr& hE, const Mask& mask,
                       const Scorer::Cache& cache) const;

  TensorPtr step_logits(Tape& tape, const StepOut& step) const;

  struct TtsStepOut {
    TensorPtr frames_m;   // [r, Dm]
    TensorPtr frames_r;   // [r, Dr]
    TensorPtr end_probs;  // [r]
    StepOut att;
  };
  // One attention query drives a group of frames_per_step output frames.
  TtsStepOut tts_decoder_step(Tape& tape, const TensorPtr& prev_frame, DecState& state,
                              AttentionHistory& hist, const TensorPtr& hE, const Mask& mask,
                              const Scorer::Cache& cache) const;
};

// Negative log-likelihood summed over steps; the caller divides by the
// number of sequences in the batch.
TensorPtr mle_loss(Tape& tape, const std::vector<TensorPtr>& step_logits,
                   const std::vector<int>& targets);

// Squared-error frame reconstruction for both streams plus binary
// cross-entropy on the ending bits, summed over the first `valid` frames.
TensorPtr tts_loss(Tape& tape, const TensorPtr& pred_m, const TensorPtr& pred_r,
                   const TensorPtr& end_probs, const TtsTargets& targets, int valid);

// Teacher-forced per-example losses (summed over time).
TensorPtr discrete_example_loss(Tape& tape, const Seq2SeqModel& model,
                                const std::vector<int>& src, const std::vector<int>& tgt);
TensorPtr discrete_example_loss_frames(Tape& tape, const Seq2SeqModel& model,
                                       const TensorPtr& src_frames,
                                       const std::vector<int>& tgt);
TensorPtr continuous_example_loss(Tape& tape, const Seq2SeqModel& model,
                                  const std::vector<int>& src, const TtsTargets& targets);

}  // namespace seqattn
