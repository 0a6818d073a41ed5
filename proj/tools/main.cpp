#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "seqattn/attention_export.h"
#include "seqattn/decoding.h"
#include "seqattn/error.h"
#include "seqattn/logging.h"
#include "seqattn/metrics.h"
#include "seqattn/train.h"
#include "seqattn/verify.h"

using namespace seqattn;
using nlohmann::json;

namespace {

int run_train(const std::string& config_path, bool seed_set, std::uint64_t seed) {
  TrainConfig config = TrainConfig::from_json_file(config_path);
  if (seed_set) config.seed = seed;
  auto result = train(config);
  json out;
  out["checkpoint"] = result.checkpoint_path;
  out["metrics"] = result.metrics_path;
  out["epochs"] = result.records.size();
  if (!result.records.empty()) {
    const auto& last = result.records.back();
    out["final_train_loss"] = last.train_loss;
    out[last.metric_name] = last.metric_value;
  }
  std::cout << out.dump() << "\n";
  return 0;
}

int run_eval(const std::string& checkpoint_path, const std::string& task_arg, int examples) {
  auto ckpt = load_checkpoint(checkpoint_path);
  auto model = model_from_checkpoint(ckpt);
  TaskSpec spec = task_arg.front() == '{' ? task_spec_from_json(task_arg)
                                          : task_spec_from_json_file(task_arg);
  auto data = generate(spec, examples);
  auto result = evaluate(model, data);
  json out;
  out["metric"] = result.metric_name;
  out["value"] = result.value;
  out["examples"] = result.examples;
  std::cout << out.dump() << "\n";
  return 0;
}

int run_decode(const std::string& checkpoint_path, const std::string& input_path, int beam,
               bool greedy, int max_len) {
  auto ckpt = load_checkpoint(checkpoint_path);
  auto model = model_from_checkpoint(ckpt);
  if (model.config.continuous()) {
    throw ConfigError("decode needs a discrete checkpoint; use export-attention or eval "
                      "for continuous models");
  }
  auto data = load_dataset(input_path);
  if (data.empty()) throw DataError("no records in " + input_path);

  double edits = 0.0, ref_len = 0.0;
  bool any_ref = false;
  for (const auto& ex : data) {
    Tape tape(false);
    auto [hE, mask] = ex.src_frames
                          ? model.encode_frames(tape, ex.src_frames,
                                                Mask::full(ex.src_frames->dim(0)))
                          : model.encode_symbols(tape, ex.src_symbols);
    const int cap = max_len > 0 ? max_len : default_max_len(mask.length);
    DecodeResult result = greedy ? greedy_decode(model, hE, mask, cap)
                                 : beam_decode(model, hE, mask, beam, cap);
    for (std::size_t i = 0; i < result.symbols.size(); ++i) {
      if (i) std::cout << ' ';
      std::cout << result.symbols[i];
    }
    std::cout << "\n";
    if (!ex.tgt_symbols.empty()) {
      any_ref = true;
      edits += edit_distance(result.symbols, ex.tgt_symbols);
      ref_len += static_cast<double>(ex.tgt_symbols.size());
    }
  }
  if (any_ref && ref_len > 0.0) {
    log_info("cer over " + std::to_string(data.size()) +
             " records: " + std::to_string(edits / ref_len * 100.0) + "%");
  }
  return 0;
}

int run_gradcheck(const std::string& variant, int order) {
  std::vector<ScorerKind> kinds;
  if (variant == "all") {
    kinds = {ScorerKind::Dot, ScorerKind::Bilinear, ScorerKind::Mlp, ScorerKind::MlpLocation,
             ScorerKind::MlpMaC};
  } else {
    kinds = {scorer_kind_from_string(variant)};
  }
  bool all_pass = true;
  for (ScorerKind kind : kinds) {
    const auto start = std::chrono::steady_clock::now();
    auto report = pipeline_grad_check(kind, order, 12345);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    all_pass = all_pass && report.pass;
    std::string worst = "-";
    if (report.worst.index >= 0) {
      worst = report.worst.param + "[" + std::to_string(report.worst.index) + "]";
    }
    std::printf("%-10s order=%d  checked=%lld  max_rel_error=%.3e  worst=%s  %s  (%.2fs)\n",
                to_string(kind).c_str(), order, static_cast<long long>(report.checked),
                report.max_rel_error, worst.c_str(), report.pass ? "PASS" : "FAIL", seconds);
  }
  return all_pass ? 0 : 2;
}

int run_export(const std::string& checkpoint_path, const std::string& input_path,
               const std::string& format, std::string output_path) {
  if (output_path.empty()) output_path = input_path + "." + format;
  export_attention(checkpoint_path, input_path, format, output_path);
  std::cout << output_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequence-to-sequence toolkit with history-aware attention"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, input_path, task_arg, output_path;
  std::string format = "csv", variant = "all";
  std::uint64_t seed = 0;
  bool greedy = false;
  int beam = 5, order = 3, examples = 32, max_len = 0;

  auto* train_cmd = app.add_subcommand("train", "train a model from a JSON config");
  train_cmd->add_option("--config", config_path, "config file")->required();
  auto* seed_opt = train_cmd->add_option("--seed", seed, "override the training seed");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a synthetic task");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval_cmd->add_option("--task", task_arg, "task spec JSON file or inline JSON")->required();
  eval_cmd->add_option("--examples", examples, "held-out examples to draw");

  auto* decode_cmd = app.add_subcommand("decode", "decode a dataset file");
  decode_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  decode_cmd->add_option("--input", input_path, "dataset file")->required();
  decode_cmd->add_option("--beam", beam, "beam width");
  decode_cmd->add_flag("--greedy", greedy, "use greedy decoding");
  decode_cmd->add_option("--max-len", max_len, "decoding cap (default 3x encoder length)");

  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  grad_cmd->add_option("--variant", variant, "dot|bilinear|mlp|mlp-loc|mlp-ma-c|all");
  grad_cmd->add_option("--order", order, "history order");

  auto* export_cmd = app.add_subcommand("export-attention", "write an alignment matrix");
  export_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  export_cmd->add_option("--input", input_path, "dataset file")->required();
  export_cmd->add_option("--format", format, "csv|pgm")->required();
  export_cmd->add_option("--output", output_path, "output path (default <input>.<format>)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (train_cmd->parsed()) return run_train(config_path, seed_opt->count() > 0, seed);
    if (eval_cmd->parsed()) return run_eval(checkpoint_path, task_arg, examples);
    if (decode_cmd->parsed()) {
      return run_decode(checkpoint_path, input_path, beam, greedy, max_len);
    }
    if (grad_cmd->parsed()) return run_gradcheck(variant, order);
    if (export_cmd->parsed()) return run_export(checkpoint_path, input_path, format, output_path);
  } catch (const Error& e) {
    json err;
    err["error"] = e.code();
    err["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    json err;
    err["error"] = "internal";
    err["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
