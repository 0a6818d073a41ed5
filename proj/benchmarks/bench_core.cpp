#include <benchmark/benchmark.h>

#include "seqattn/attention.h"
#include "seqattn/model.h"
#include "seqattn/train.h"

using namespace seqattn;

namespace {

TensorPtr random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = false) {
  auto t = Tensor::create(std::move(shape), requires_grad);
  for (auto& v : t->data) v = rng.uniform(-1.0, 1.0);
  return t;
}

void BM_conv1d_same_forward(benchmark::State& state) {
  const int steps = static_cast<int>(state.range(0));
  Rng rng(1);
  auto x = random_tensor({steps, 1}, rng);
  auto f = random_tensor({1, 15, 8}, rng);
  for (auto _ : state) {
    Tape tape(false);
    benchmark::DoNotOptimize(conv1d_same(tape, x, f));
  }
  state.SetItemsProcessed(state.iterations() * steps);
}
BENCHMARK(BM_conv1d_same_forward)->Arg(32)->Arg(200);

void BM_conv1d_same_backward(benchmark::State& state) {
  const int steps = static_cast<int>(state.range(0));
  Rng rng(2);
  auto x = random_tensor({steps, 1}, rng, true);
  auto f = random_tensor({1, 15, 8}, rng, true);
  for (auto _ : state) {
    Tape tape;
    auto y = conv1d_same(tape, x, f);
    auto flat = reshape(tape, y, {steps * 8});
    tape.backward(dot(tape, flat, flat));
    x->zero_grad();
    f->zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * steps);
}
BENCHMARK(BM_conv1d_same_backward)->Arg(32)->Arg(200);

void BM_attend(benchmark::State& state) {
  const int steps = static_cast<int>(state.range(0));
  Rng rng(3);
  auto hE = random_tensor({steps, 64}, rng);
  auto scores = random_tensor({steps}, rng);
  Mask mask = Mask::full(steps);
  for (auto _ : state) {
    Tape tape(false);
    benchmark::DoNotOptimize(attend(tape, hE, scores, mask));
  }
}
BENCHMARK(BM_attend)->Arg(32)->Arg(200);

void BM_decoder_step_combined(benchmark::State& state) {
  const int positions = static_cast<int>(state.range(0));
  ModelConfig cfg;
  cfg.src_vocab = 8;
  cfg.src_emb = 16;
  cfg.enc_hidden = 32;
  cfg.subsample = {1};
  cfg.dec_hidden = 32;
  cfg.emb_dim = 16;
  cfg.tgt_vocab = 8;
  cfg.scorer.kind = ScorerKind::MlpMaC;
  cfg.scorer.order = 3;
  cfg.scorer.proj = 32;
  cfg.scorer.ctx_proj = 32;
  cfg.scorer.bank = FilterBank{{{7, 8}, {15, 8}, {31, 8}, {63, 8}}};
  Rng rng(4);
  Seq2SeqModel model(cfg, rng);
  Tape tape(false);
  auto hE = random_tensor({positions, 32}, rng);
  auto cache = model.scorer.make_cache(tape, hE);
  Mask mask = Mask::full(positions);
  for (auto _ : state) {
    Tape step_tape(false);
    auto hist = model.initial_history(positions);
    auto dec = model.initial_state();
    auto out = model.decoder_step(step_tape, model.embed_target(step_tape, kBosId), dec, hist,
                                  hE, mask, cache);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_decoder_step_combined)->Arg(32)->Arg(200);

void BM_adam_step(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  Rng rng(5);
  auto p = random_tensor({size}, rng, true);
  p->name = "bench";
  for (auto& g : p->grad) g = rng.uniform(-0.1, 0.1);
  AdamState adam;
  adam.init({p});
  for (auto _ : state) {
    adam_step({p}, adam);
  }
  state.SetItemsProcessed(state.iterations() * size);
}
BENCHMARK(BM_adam_step)->Arg(1 << 12)->Arg(1 << 16);

}  // namespace

BENCHMARK_MAIN();
