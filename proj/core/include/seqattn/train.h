#pragma once

#include <string>
#include <vector>

#include "seqattn/checkpoint.h"
#include "seqattn/model.h"
#include "seqattn/tasks.h"

namespace seqattn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig hyper;
  std::int64_t step_count = 0;
  std::vector<std::vector<double>> m, v;  // parallel to the parameter list

  void init(const std::vector<TensorPtr>& params);
};

// One bias-corrected update from the gradients currently stored in the
// parameters. Aborts on non-finite gradients, naming the parameter.
void adam_step(const std::vector<TensorPtr>& params, AdamState& state);

// Scales gradients so their global L2 norm is at most max_norm (no-op when
// max_norm <= 0).
void clip_gradients(const std::vector<TensorPtr>& params, double max_norm);

struct TrainConfig {
  TaskSpec task;
  ModelConfig model;     // mode fields (vocab/frame dims) are derived from task
  AdamConfig adam;
  int batch_size = 8;
  int epochs = 10;
  std::uint64_t seed = 1;
  Precision precision = Precision::Double;
  double grad_clip = 0.0;
  int train_examples = 200;
  int dev_examples = 32;
  std::string out_dir = "run";

  static TrainConfig from_json_file(const std::string& path);
  static TrainConfig from_json_string(const std::string& text);
  std::string to_json() const;
};

// Fills the mode-dependent model fields (vocabularies, frame dims) from the
// task so config files only carry architecture knobs.
ModelConfig resolve_model_config(const TaskSpec& task, ModelConfig model);

// Standalone task-spec parsing (same schema as the config's "task" object).
TaskSpec task_spec_from_json(const std::string& text);
TaskSpec task_spec_from_json_file(const std::string& path);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;      // mean per-sequence loss over the epoch
  std::string metric_name;      // dev_cer or dev_l2
  double metric_value = 0.0;
};

struct TrainResult {
  std::string checkpoint_path;  // latest checkpoint written
  std::string metrics_path;
  std::vector<EpochRecord> records;
};

// Full training run: deterministic given config+seed, checkpoints every
// epoch, appends one JSON record per epoch to <out_dir>/metrics.jsonl.
TrainResult train(const TrainConfig& config);

// Dev-set evaluation with greedy decoding (discrete) or free-running
// inference (continuous).
struct EvalResult {
  std::string metric_name;
  double value = 0.0;
  int examples = 0;
};
EvalResult evaluate(const Seq2SeqModel& model, const std::vector<Example>& data);

// Checkpoint glue: parameters and optimizer state under stable names.
Checkpoint make_checkpoint(const TrainConfig& config, const Seq2SeqModel& model,
                           const AdamState& adam, std::int64_t epoch,
                           const std::string& rng_state);
Seq2SeqModel model_from_checkpoint(const Checkpoint& ckpt, TrainConfig* config_out = nullptr);

}  // namespace seqattn
