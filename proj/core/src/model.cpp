#include "seqattn/model.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "seqattn/error.h"

namespace seqattn {

int ModelConfig::reduction() const {
  int r = 1;
  for (int f : subsample) r *= f;
  return r;
}

void ModelConfig::validate() const {
  if (src_vocab < 0 || (src_vocab == 0 && src_dim < 1)) {
    throw ConfigError("model needs a discrete source vocabulary or a frame dimension");
  }
  if (src_vocab > 0 && src_emb < 1) throw ConfigError("src_emb must be positive");
  if (enc_hidden < 2 || enc_hidden % 2 != 0) {
    throw ConfigError("enc_hidden must be even and >= 2, got " + std::to_string(enc_hidden));
  }
  if (subsample.empty()) throw ConfigError("encoder needs at least one layer");
  for (int f : subsample) {
    if (f != 1 && f != 2) throw ConfigError("subsample factors must be 1 or 2");
  }
  if (dec_hidden < 1 || dec_layers < 1 || emb_dim < 1) {
    throw ConfigError("decoder dims must be positive");
  }
  if (continuous()) {
    if (frame_dim_m < 1 || frame_dim_r < 1) {
      throw ConfigError("continuous mode needs both frame dimensions");
    }
    if (frames_per_step < 1) {
      throw ConfigError("frames_per_step must be >= 1, got " + std::to_string(frames_per_step));
    }
  } else if (tgt_vocab < kReservedSymbols) {
    throw ConfigError("target vocabulary must hold bos/eos/padding, got " +
                      std::to_string(tgt_vocab));
  }
  if (scorer.order < 1) throw ConfigError("history order must be >= 1");
}

LstmCell::LstmCell(const std::string& prefix, int input_dim, int units_, Rng& rng,
                   ParamMap& params)
    : units(units_) {
  W = params.add(prefix + ".W",
                 init_uniform({4 * units, input_dim + units}, input_dim + units, units, rng));
  b = params.add(prefix + ".b", Tensor::create({4 * units}));
  // forget gate opens at init
  for (int i = units; i < 2 * units; ++i) b->data[static_cast<std::size_t>(i)] = 1.0;
}

LstmCell::State LstmCell::initial() const {
  return {Tensor::create({units}), Tensor::create({units})};
}

LstmCell::State LstmCell::step(Tape& tape, const TensorPtr& input, const State& prev) const {
  auto gates = affine(tape, concat_vec(tape, input, prev.h), W, b);
  auto in_gate = activation(tape, narrow0(tape, gates, 0, units), Act::Sigmoid);
  auto forget_gate = activation(tape, narrow0(tape, gates, units, units), Act::Sigmoid);
  auto out_gate = activation(tape, narrow0(tape, gates, 2 * units, units), Act::Sigmoid);
  auto candidate = activation(tape, narrow0(tape, gates, 3 * units, units), Act::Tanh);
  auto cell = add(tape, emul(tape, forget_gate, prev.c), emul(tape, in_gate, candidate));
  auto hidden = emul(tape, out_gate, activation(tape, cell, Act::Tanh));
  return {hidden, cell};
}

Encoder::Encoder(const ModelConfig& config, int input_dim, Rng& rng, ParamMap& params)
    : hidden_(config.enc_hidden) {
  in_W = params.add("enc.in_W", init_uniform({hidden_, input_dim}, input_dim, hidden_, rng));
  in_b = params.add("enc.in_b", Tensor::create({hidden_}));
  const int half = hidden_ / 2;
  for (std::size_t i = 0; i < config.subsample.size(); ++i) {
    Layer layer;
    const std::string prefix = "enc.l" + std::to_string(i);
    layer.fwd = LstmCell(prefix + ".fwd", hidden_, half, rng, params);
    layer.bwd = LstmCell(prefix + ".bwd", hidden_, half, rng, params);
    layer.factor = config.subsample[i];
    layers_.push_back(std::move(layer));
  }
}

int Encoder::reduction() const {
  int r = 1;
  for (const auto& l : layers_) r *= l.factor;
  return r;
}

int Encoder::reduced_length(int length) const {
  for (const auto& l : layers_) {
    if (l.factor == 2) length = (length + 1) / 2;
  }
  return length;
}

std::pair<TensorPtr, Mask> Encoder::forward(Tape& tape, const TensorPtr& frames,
                                            const Mask& mask) const {
  if (!frames || frames->rank() != 2) {
    throw DimensionError("encode: expected [S,In] frames");
  }
  const int total = frames->dim(0);
  mask.validate(total);
  const int valid = mask.length;
  if (valid < reduction()) {
    throw DataError("input too short: " + std::to_string(valid) + " frames for reduction " +
                    std::to_string(reduction()));
  }

  auto prefix = valid == total ? frames : narrow0(tape, frames, 0, valid);
  auto projected = activation(tape, affine(tape, prefix, in_W, in_b), Act::LeakyRelu);

  std::vector<TensorPtr> steps;
  steps.reserve(static_cast<std::size_t>(valid));
  for (int t = 0; t < valid; ++t) steps.push_back(row(tape, projected, t));

  for (const auto& layer : layers_) {
    const int n = static_cast<int>(steps.size());
    std::vector<TensorPtr> fwd_h(n), bwd_h(n);
    auto fstate = layer.fwd.initial();
    for (int t = 0; t < n; ++t) {
      fstate = layer.fwd.step(tape, steps[static_cast<std::size_t>(t)], fstate);
      fwd_h[static_cast<std::size_t>(t)] = fstate.h;
    }
    auto bstate = layer.bwd.initial();
    for (int t = n - 1; t >= 0; --t) {
      bstate = layer.bwd.step(tape, steps[static_cast<std::size_t>(t)], bstate);
      bwd_h[static_cast<std::size_t>(t)] = bstate.h;
    }
    std::vector<TensorPtr> merged(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
      merged[static_cast<std::size_t>(t)] =
          concat_vec(tape, fwd_h[static_cast<std::size_t>(t)], bwd_h[static_cast<std::size_t>(t)]);
    }
    if (layer.factor == 2) {
      std::vector<TensorPtr> kept;
      for (int t = 0; t < n; t += 2) kept.push_back(merged[static_cast<std::size_t>(t)]);
      steps = std::move(kept);
    } else {
      steps = std::move(merged);
    }
  }

  const int out_valid = static_cast<int>(steps.size());
  const int out_total = reduced_length(total);
  // padded tail rows stay exactly zero so masked attention never sees them
  for (int t = out_valid; t < out_total; ++t) steps.push_back(Tensor::create({hidden_}));
  auto hE = stack_rows(tape, steps);
  return {hE, Mask(out_valid, out_total)};
}

void TtsTargets::validate() const {
  if (!frames_m || !frames_r || frames_m->rank() != 2 || frames_r->rank() != 2) {
    throw DataError("tts targets need two frame matrices");
  }
  const int frames = frames_m->dim(0);
  if (frames_r->dim(0) != frames || static_cast<int>(ending.size()) != frames) {
    throw DataError("tts targets: stream lengths disagree");
  }
  int transitions = 0;
  for (int s = 0; s < frames; ++s) {
    const double b = ending[static_cast<std::size_t>(s)];
    if (b != 0.0 && b != 1.0) throw DataError("ending bits must be 0 or 1");
    if (s > 0 && ending[static_cast<std::size_t>(s - 1)] == 1.0 && b == 0.0) {
      throw DataError("ending bits must stay 1 once set");
    }
    if ((s == 0 && b == 1.0) || (s > 0 && ending[static_cast<std::size_t>(s - 1)] == 0.0 && b == 1.0)) {
      ++transitions;
    }
  }
  if (transitions != 1 || ending.back() != 1.0) {
    throw DataError("ending bits need exactly one 0->1 transition ending at the final frame");
  }
}

Seq2SeqModel::Seq2SeqModel(const ModelConfig& config_, Rng& rng) : config(config_) {
  config.validate();
  if (config.src_vocab > 0) {
    src_embedding = params.add(
        "src.embedding",
        init_uniform({config.src_vocab, config.src_emb}, config.src_vocab, config.src_emb, rng));
  }
  const int enc_input = config.src_vocab > 0 ? config.src_emb : config.src_dim;
  encoder = Encoder(config, enc_input, rng, params);
  scorer = Scorer(config.scorer, encoder.output_dim(), config.dec_hidden, rng, params);

  for (int i = 0; i < config.dec_layers; ++i) {
    const int input_dim = i == 0 ? config.emb_dim : config.dec_hidden;
    dec_cells.emplace_back("dec.l" + std::to_string(i), input_dim, config.dec_hidden, rng,
                           params);
  }

  const int head_in = config.dec_hidden + encoder.output_dim();
  if (config.continuous()) {
    prenet_W = params.add("dec.prenet_W", init_uniform({config.emb_dim, config.frame_dim_m},
                                                       config.frame_dim_m, config.emb_dim, rng));
    prenet_b = params.add("dec.prenet_b", Tensor::create({config.emb_dim}));
    const int frame_out = config.frames_per_step * (config.frame_dim_m + config.frame_dim_r);
    frame_W = params.add("head.frame_W", init_uniform({frame_out, head_in}, head_in, frame_out, rng));
    frame_b = params.add("head.frame_b", Tensor::create({frame_out}));
    end_W = params.add("head.end_W",
                       init_uniform({config.frames_per_step, head_in}, head_in,
                                    config.frames_per_step, rng));
    end_b = params.add("head.end_b", Tensor::create({config.frames_per_step}));
  } else {
    tgt_embedding = params.add(
        "dec.embedding",
        init_uniform({config.tgt_vocab, config.emb_dim}, config.tgt_vocab, config.emb_dim, rng));
    out_W = params.add("head.out_W",
                       init_uniform({config.tgt_vocab, head_in}, head_in, config.tgt_vocab, rng));
    out_b = params.add("head.out_b", Tensor::create({config.tgt_vocab}));
  }
}

std::pair<TensorPtr, Mask> Seq2SeqModel::encode_symbols(Tape& tape,
                                                        const std::vector<int>& src) const {
  if (config.src_vocab <= 0) throw ContractError("model has a frame source, not symbols");
  if (src.empty()) throw DataError("empty source sequence");
  std::vector<TensorPtr> rows;
  rows.reserve(src.size());
  for (int sym : src) {
    if (sym < 0 || sym >= config.src_vocab) {
      throw DataError("source symbol " + std::to_string(sym) + " outside vocabulary of " +
                      std::to_string(config.src_vocab));
    }
    rows.push_back(row(tape, src_embedding, sym));
  }
  auto frames = stack_rows(tape, rows);
  return encoder.forward(tape, frames, Mask::full(static_cast<int>(src.size())));
}

std::pair<TensorPtr, Mask> Seq2SeqModel::encode_frames(Tape& tape, const TensorPtr& frames,
                                                       const Mask& mask) const {
  if (config.src_vocab > 0) throw ContractError("model has a symbol source, not frames");
  return encoder.forward(tape, frames, mask);
}

Seq2SeqModel::DecState Seq2SeqModel::initial_state() const {
  DecState state;
  for (const auto& cell : dec_cells) state.layers.push_back(cell.initial());
  return state;
}

AttentionHistory Seq2SeqModel::initial_history(int positions) const {
  return history_init(config.scorer.order, positions, encoder.output_dim());
}

TensorPtr Seq2SeqModel::embed_target(Tape& tape, int symbol) const {
  if (symbol < 0 || symbol >= config.tgt_vocab) {
    throw DataError("target symbol " + std::to_string(symbol) + " outside vocabulary of " +
                    std::to_string(config.tgt_vocab));
  }
  return row(tape, tgt_embedding, symbol);
}

Seq2SeqModel::StepOut Seq2SeqModel::decoder_step(Tape& tape, const TensorPtr& input,
                                                 DecState& state, AttentionHistory& hist,
                                                 const TensorPtr& hE, const Mask& mask,
                                                 const Scorer::Cache& cache) const {
  if (!hist.initialized()) throw ContractError("decoder_step: uninitialized attention history");
  TensorPtr x = input;
  for (std::size_t i = 0; i < dec_cells.size(); ++i) {
    state.layers[i] = dec_cells[i].step(tape, x, state.layers[i]);
    x = state.layers[i].h;
  }
  auto scores = scorer.scores(tape, hE, x, hist, cache);
  auto att = attend(tape, hE, scores, mask);
  hist.step(att.align, att.context);
  StepOut out;
  out.align = att.align;
  out.context = att.context;
  out.head_in = concat_vec(tape, x, att.context);
  return out;
}

TensorPtr Seq2SeqModel::step_logits(Tape& tape, const StepOut& step) const {
  return affine(tape, step.head_in, out_W, out_b);
}

Seq2SeqModel::TtsStepOut Seq2SeqModel::tts_decoder_step(Tape& tape, const TensorPtr& prev_frame,
                                                        DecState& state, AttentionHistory& hist,
                                                        const TensorPtr& hE, const Mask& mask,
                                                        const Scorer::Cache& cache) const {
  auto pre = activation(tape, affine(tape, prev_frame, prenet_W, prenet_b), Act::LeakyRelu);
  auto att = decoder_step(tape, pre, state, hist, hE, mask, cache);
  const int r = config.frames_per_step;
  const int dm = config.frame_dim_m;
  const int dr = config.frame_dim_r;
  auto flat = affine(tape, att.head_in, frame_W, frame_b);
  TtsStepOut out;
  out.frames_m = reshape(tape, narrow0(tape, flat, 0, r * dm), {r, dm});
  out.frames_r = reshape(tape, narrow0(tape, flat, r * dm, r * dr), {r, dr});
  out.end_probs = activation(tape, affine(tape, att.head_in, end_W, end_b), Act::Sigmoid);
  out.att = att;
  return out;
}

TensorPtr mle_loss(Tape& tape, const std::vector<TensorPtr>& step_logits,
                   const std::vector<int>& targets) {
  if (step_logits.size() != targets.size() || step_logits.empty()) {
    throw DimensionError("mle_loss: " + std::to_string(step_logits.size()) + " steps vs " +
                         std::to_string(targets.size()) + " targets");
  }
  std::vector<TensorPtr> terms;
  terms.reserve(targets.size());
  for (std::size_t t = 0; t < targets.size(); ++t) {
    terms.push_back(nll_from_logits(tape, step_logits[t], targets[t]));
  }
  return add_all(tape, terms);
}

TensorPtr tts_loss(Tape& tape, const TensorPtr& pred_m, const TensorPtr& pred_r,
                   const TensorPtr& end_probs, const TtsTargets& targets, int valid) {
  targets.validate();
  if (valid < 1 || valid > targets.frames_m->dim(0)) {
    throw DimensionError("tts_loss: invalid frame count " + std::to_string(valid));
  }
  auto m_term = mse_sum(tape, pred_m, targets.frames_m, valid);
  auto r_term = mse_sum(tape, pred_r, targets.frames_r, valid);
  auto end_term = bce_sum(tape, end_probs, targets.ending, valid);
  return add_all(tape, {m_term, r_term, end_term});
}

namespace {

TensorPtr discrete_loss_from_states(Tape& tape, const Seq2SeqModel& model, const TensorPtr& hE,
                                    const Mask& mask, const std::vector<int>& tgt) {
  auto cache = model.scorer.make_cache(tape, hE);
  auto hist = model.initial_history(hE->dim(0));
  auto state = model.initial_state();
  std::vector<TensorPtr> logits;
  std::vector<int> targets;
  int prev = kBosId;
  for (std::size_t t = 0; t <= tgt.size(); ++t) {
    auto step = model.decoder_step(tape, model.embed_target(tape, prev), state, hist, hE,
                                   mask, cache);
    logits.push_back(model.step_logits(tape, step));
    const int target = t < tgt.size() ? tgt[t] : kEosId;
    targets.push_back(target);
    prev = target;
  }
  return mle_loss(tape, logits, targets);
}

}  // namespace

TensorPtr discrete_example_loss(Tape& tape, const Seq2SeqModel& model,
                                const std::vector<int>& src, const std::vector<int>& tgt) {
  auto [hE, mask] = model.encode_symbols(tape, src);
  return discrete_loss_from_states(tape, model, hE, mask, tgt);
}

TensorPtr discrete_example_loss_frames(Tape& tape, const Seq2SeqModel& model,
                                       const TensorPtr& src_frames,
                                       const std::vector<int>& tgt) {
  auto [hE, mask] = model.encode_frames(tape, src_frames, Mask::full(src_frames->dim(0)));
  return discrete_loss_from_states(tape, model, hE, mask, tgt);
}

TensorPtr continuous_example_loss(Tape& tape, const Seq2SeqModel& model,
                                  const std::vector<int>& src, const TtsTargets& targets) {
  targets.validate();
  auto [hE, mask] = model.encode_symbols(tape, src);
  auto cache = model.scorer.make_cache(tape, hE);
  auto hist = model.initial_history(hE->dim(0));
  auto state = model.initial_state();

  const int frames = targets.frames_m->dim(0);
  const int r = model.config.frames_per_step;
  const int dm = model.config.frame_dim_m;
  const int dr = model.config.frame_dim_r;
  const int groups = (frames + r - 1) / r;

  std::vector<TensorPtr> terms;
  TensorPtr prev_frame = Tensor::create({dm});  // zero go-frame
  for (int g = 0; g < groups; ++g) {
    auto step = model.tts_decoder_step(tape, prev_frame, state, hist, hE, mask, cache);
    const int lo = g * r;
    const int group_valid = std::min(r, frames - lo);
    // group-local targets, zero-padded past the valid frames
    auto tgt_m = Tensor::create({r, dm});
    auto tgt_r = Tensor::create({r, dr});
    TtsTargets group_targets;
    std::vector<double> bits(static_cast<std::size_t>(r), 1.0);
    for (int j = 0; j < group_valid; ++j) {
      std::copy_n(targets.frames_m->data.data() + static_cast<std::size_t>(lo + j) * dm, dm,
                  tgt_m->data.data() + static_cast<std::size_t>(j) * dm);
      std::copy_n(targets.frames_r->data.data() + static_cast<std::size_t>(lo + j) * dr, dr,
                  tgt_r->data.data() + static_cast<std::size_t>(j) * dr);
      bits[static_cast<std::size_t>(j)] = targets.ending[static_cast<std::size_t>(lo + j)];
    }
    terms.push_back(mse_sum(tape, step.frames_m, tgt_m, group_valid));
    terms.push_back(mse_sum(tape, step.frames_r, tgt_r, group_valid));
    terms.push_back(bce_sum(tape, step.end_probs, bits, group_valid));

    // teacher forcing: the last target frame of this group feeds the next step
    const int next_input = lo + r - 1;
    if (g + 1 < groups) {
      auto f = Tensor::create({dm});
      std::copy_n(targets.frames_m->data.data() + static_cast<std::size_t>(next_input) * dm, dm,
                  f->data.data());
      prev_frame = f;
    }
  }
  return add_all(tape, terms);
}

}  // namespace seqattn
