#include "seqattn/verify.h"

#include "seqattn/model.h"

namespace seqattn {

GradCheckReport pipeline_grad_check(ScorerKind kind, int order, std::uint64_t seed, double h,
                                    double tol) {
  ModelConfig cfg;
  cfg.src_vocab = 7;
  cfg.src_emb = 5;
  cfg.enc_hidden = 8;
  cfg.subsample = {1, 2};
  cfg.dec_hidden = 8;
  cfg.dec_layers = 1;
  cfg.emb_dim = 5;
  cfg.tgt_vocab = 7;
  cfg.scorer.kind = kind;
  cfg.scorer.order = order;
  cfg.scorer.proj = 8;
  cfg.scorer.ctx_proj = 6;
  cfg.scorer.bank = FilterBank{{{3, 2}, {5, 2}}};
  cfg.scorer.location_width = 5;
  cfg.scorer.location_channels = 2;

  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(kind)));
  Seq2SeqModel model(cfg, rng);
  for (auto& [name, t] : model.params.items) {
    for (auto& v : t->data) {
      if (v == 0.0) v = rng.uniform(-0.2, 0.2);
    }
  }

  std::vector<int> src(7);
  for (auto& s : src) s = rng.uniform_int(kReservedSymbols, cfg.src_vocab - 1);
  std::vector<int> tgt(3);
  for (auto& s : tgt) s = rng.uniform_int(kReservedSymbols, cfg.tgt_vocab - 1);

  return grad_check(
      [&](Tape& tape) { return discrete_example_loss(tape, model, src, tgt); },
      model.params.tensors(), h, tol);
}

}  // namespace seqattn
