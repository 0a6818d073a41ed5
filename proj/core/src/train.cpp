#include "seqattn/train.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "seqattn/decoding.h"
#include "seqattn/error.h"
#include "seqattn/logging.h"
#include "seqattn/metrics.h"

namespace seqattn {

using nlohmann::json;

void AdamState::init(const std::vector<TensorPtr>& params) {
  step_count = 0;
  m.clear();
  v.clear();
  for (const auto& p : params) {
    m.emplace_back(p->data.size(), 0.0);
    v.emplace_back(p->data.size(), 0.0);
  }
}

void adam_step(const std::vector<TensorPtr>& params, AdamState& state) {
  if (state.m.size() != params.size()) throw ContractError("adam state not initialized");
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(state.hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(state.hyper.beta2, t);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto& p = *params[pi];
    p.ensure_grad();
    auto& m = state.m[pi];
    auto& v = state.v[pi];
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double g = p.grad[i];
      if (!std::isfinite(g)) {
        throw ContractError("non-finite gradient in " +
                            (p.name.empty() ? "parameter " + std::to_string(pi) : p.name));
      }
      m[i] = state.hyper.beta1 * m[i] + (1.0 - state.hyper.beta1) * g;
      v[i] = state.hyper.beta2 * v[i] + (1.0 - state.hyper.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p.data[i] -= state.hyper.lr * m_hat / (std::sqrt(v_hat) + state.hyper.eps);
    }
  }
}

void clip_gradients(const std::vector<TensorPtr>& params, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p->grad) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (const auto& p : params) {
    for (double& g : p->grad) g *= scale;
  }
}

namespace {

void check_keys(const json& obj, const std::vector<std::string>& allowed,
                const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
    }
  }
}

TaskSpec parse_task(const json& j) {
  check_keys(j, {"kind", "vocab", "len_min", "len_max", "rate", "noise", "seed",
                 "frame_dim_m", "frame_dim_r"},
             "task");
  TaskSpec spec;
  spec.kind = task_kind_from_string(j.value("kind", "copy"));
  spec.vocab = j.value("vocab", spec.vocab);
  spec.len_min = j.value("len_min", spec.len_min);
  spec.len_max = j.value("len_max", spec.len_max);
  spec.rate = j.value("rate", spec.rate);
  spec.noise = j.value("noise", spec.noise);
  spec.seed = j.value("seed", spec.seed);
  spec.frame_dim_m = j.value("frame_dim_m", spec.frame_dim_m);
  spec.frame_dim_r = j.value("frame_dim_r", spec.frame_dim_r);
  return spec;
}

ScorerConfig parse_scorer(const json& j) {
  check_keys(j, {"kind", "order", "proj", "ctx_proj", "filter_widths", "filter_channels",
                 "location_width", "location_channels"},
             "model.scorer");
  ScorerConfig cfg;
  cfg.kind = scorer_kind_from_string(j.value("kind", "mlp-ma-c"));
  cfg.order = j.value("order", cfg.order);
  cfg.proj = j.value("proj", cfg.proj);
  cfg.ctx_proj = j.value("ctx_proj", cfg.ctx_proj);
  if (j.contains("filter_widths")) {
    const int channels = j.value("filter_channels", 64);
    cfg.bank.groups.clear();
    for (int w : j.at("filter_widths").get<std::vector<int>>()) {
      cfg.bank.groups.push_back({w, channels});
    }
  } else if (j.contains("filter_channels")) {
    const int channels = j.at("filter_channels").get<int>();
    for (auto& g : cfg.bank.groups) g.channels = channels;
  }
  cfg.location_width = j.value("location_width", cfg.location_width);
  cfg.location_channels = j.value("location_channels", cfg.location_channels);
  return cfg;
}

ModelConfig parse_model(const json& j) {
  check_keys(j, {"src_emb", "enc_hidden", "subsample", "dec_hidden", "dec_layers", "emb_dim",
                 "frames_per_step", "scorer"},
             "model");
  ModelConfig cfg;
  cfg.src_emb = j.value("src_emb", cfg.src_emb);
  cfg.enc_hidden = j.value("enc_hidden", cfg.enc_hidden);
  if (j.contains("subsample")) cfg.subsample = j.at("subsample").get<std::vector<int>>();
  cfg.dec_hidden = j.value("dec_hidden", cfg.dec_hidden);
  cfg.dec_layers = j.value("dec_layers", cfg.dec_layers);
  cfg.emb_dim = j.value("emb_dim", cfg.emb_dim);
  cfg.frames_per_step = j.value("frames_per_step", cfg.frames_per_step);
  if (j.contains("scorer")) cfg.scorer = parse_scorer(j.at("scorer"));
  return cfg;
}

json scorer_to_json(const ScorerConfig& cfg) {
  json j;
  j["kind"] = to_string(cfg.kind);
  j["order"] = cfg.order;
  j["proj"] = cfg.proj;
  j["ctx_proj"] = cfg.ctx_proj;
  std::vector<int> widths;
  for (const auto& g : cfg.bank.groups) widths.push_back(g.width);
  j["filter_widths"] = widths;
  j["filter_channels"] = cfg.bank.groups.empty() ? 64 : cfg.bank.groups[0].channels;
  j["location_width"] = cfg.location_width;
  j["location_channels"] = cfg.location_channels;
  return j;
}

}  // namespace

TrainConfig TrainConfig::from_json_string(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, {"task", "model", "train", "output_dir"}, "config");
  TrainConfig cfg;
  if (j.contains("task")) cfg.task = parse_task(j.at("task"));
  if (j.contains("model")) cfg.model = parse_model(j.at("model"));
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t, {"lr", "beta1", "beta2", "eps", "batch_size", "epochs", "seed", "precision",
                   "grad_clip", "train_examples", "dev_examples"},
               "train");
    cfg.adam.lr = t.value("lr", cfg.adam.lr);
    cfg.adam.beta1 = t.value("beta1", cfg.adam.beta1);
    cfg.adam.beta2 = t.value("beta2", cfg.adam.beta2);
    cfg.adam.eps = t.value("eps", cfg.adam.eps);
    cfg.batch_size = t.value("batch_size", cfg.batch_size);
    cfg.epochs = t.value("epochs", cfg.epochs);
    cfg.seed = t.value("seed", cfg.seed);
    if (t.contains("precision")) {
      const std::string p = t.at("precision").get<std::string>();
      if (p == "double") {
        cfg.precision = Precision::Double;
      } else if (p == "single") {
        cfg.precision = Precision::Single;
      } else {
        throw ConfigError("precision must be \"double\" or \"single\", got " + p);
      }
    }
    cfg.grad_clip = t.value("grad_clip", cfg.grad_clip);
    cfg.train_examples = t.value("train_examples", cfg.train_examples);
    cfg.dev_examples = t.value("dev_examples", cfg.dev_examples);
  }
  cfg.out_dir = j.value("output_dir", cfg.out_dir);
  return cfg;
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return from_json_string(text);
}

TaskSpec task_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("task spec is not valid JSON: ") + e.what());
  }
  return parse_task(j);
}

TaskSpec task_spec_from_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open task spec " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return task_spec_from_json(text);
}

std::string TrainConfig::to_json() const {
  json j;
  j["task"]["kind"] = to_string(task.kind);
  j["task"]["vocab"] = task.vocab;
  j["task"]["len_min"] = task.len_min;
  j["task"]["len_max"] = task.len_max;
  j["task"]["rate"] = task.rate;
  j["task"]["noise"] = task.noise;
  j["task"]["seed"] = task.seed;
  j["task"]["frame_dim_m"] = task.frame_dim_m;
  j["task"]["frame_dim_r"] = task.frame_dim_r;
  j["model"]["src_emb"] = model.src_emb;
  j["model"]["enc_hidden"] = model.enc_hidden;
  j["model"]["subsample"] = model.subsample;
  j["model"]["dec_hidden"] = model.dec_hidden;
  j["model"]["dec_layers"] = model.dec_layers;
  j["model"]["emb_dim"] = model.emb_dim;
  j["model"]["frames_per_step"] = model.frames_per_step;
  j["model"]["scorer"] = scorer_to_json(model.scorer);
  j["train"]["lr"] = adam.lr;
  j["train"]["beta1"] = adam.beta1;
  j["train"]["beta2"] = adam.beta2;
  j["train"]["eps"] = adam.eps;
  j["train"]["batch_size"] = batch_size;
  j["train"]["epochs"] = epochs;
  j["train"]["seed"] = seed;
  j["train"]["precision"] = precision == Precision::Double ? "double" : "single";
  j["train"]["grad_clip"] = grad_clip;
  j["train"]["train_examples"] = train_examples;
  j["train"]["dev_examples"] = dev_examples;
  // the output directory is a runtime location, not part of the experiment:
  // keeping it out makes checkpoint bytes independent of where a run lives
  return j.dump(2);
}

ModelConfig resolve_model_config(const TaskSpec& task, ModelConfig model) {
  task.validate();
  model.src_vocab = 0;
  model.src_dim = 0;
  model.tgt_vocab = 0;
  switch (task.kind) {
    case TaskKind::Copy:
    case TaskKind::Reverse:
      model.src_vocab = task.vocab;
      model.tgt_vocab = task.vocab;
      break;
    case TaskKind::FramesToSymbols:
      model.src_dim = task.vocab;
      model.tgt_vocab = task.vocab;
      break;
    case TaskKind::SymbolsToFrames:
      model.src_vocab = task.vocab;
      model.frame_dim_m = task.frame_dim_m;
      model.frame_dim_r = task.frame_dim_r;
      break;
  }
  model.validate();
  return model;
}

EvalResult evaluate(const Seq2SeqModel& model, const std::vector<Example>& data) {
  EvalResult out;
  out.examples = static_cast<int>(data.size());
  if (data.empty()) throw MetricError("evaluate: empty dataset");
  if (!model.config.continuous()) {
    out.metric_name = "dev_cer";
    double edits = 0.0, ref_len = 0.0;
    for (const Example& ex : data) {
      Tape tape(false);
      auto [hE, mask] = ex.src_frames
                            ? model.encode_frames(tape, ex.src_frames,
                                                  Mask::full(ex.src_frames->dim(0)))
                            : model.encode_symbols(tape, ex.src_symbols);
      auto result = greedy_decode(model, hE, mask, default_max_len(mask.length));
      edits += edit_distance(result.symbols, ex.tgt_symbols);
      ref_len += static_cast<double>(ex.tgt_symbols.size());
    }
    out.value = edits / ref_len * 100.0;
  } else {
    out.metric_name = "dev_l2";
    double total = 0.0;
    for (const Example& ex : data) {
      const int target_frames = ex.tts.frames_m->dim(0);
      auto result = tts_infer(model, ex.src_symbols, 3 * target_frames);
      total += l2_metric(result.frames_m, ex.tts.frames_m).value;
    }
    out.value = total / static_cast<double>(data.size());
  }
  return out;
}

Checkpoint make_checkpoint(const TrainConfig& config, const Seq2SeqModel& model,
                           const AdamState& adam, std::int64_t epoch,
                           const std::string& rng_state) {
  Checkpoint ckpt;
  ckpt.config_json = config.to_json();
  ckpt.epoch = epoch;
  ckpt.rng_state = rng_state;
  for (const auto& [name, t] : model.params.items) {
    ckpt.tensors.emplace_back(name, Tensor::from(t->shape, t->data));
  }
  for (std::size_t i = 0; i < model.params.items.size(); ++i) {
    const auto& [name, t] = model.params.items[i];
    ckpt.tensors.emplace_back("optim.m." + name, Tensor::from(t->shape, adam.m[i]));
    ckpt.tensors.emplace_back("optim.v." + name, Tensor::from(t->shape, adam.v[i]));
  }
  ckpt.tensors.emplace_back("optim.step_count",
                            Tensor::from({1}, {static_cast<double>(adam.step_count)}));
  return ckpt;
}

Seq2SeqModel model_from_checkpoint(const Checkpoint& ckpt, TrainConfig* config_out) {
  TrainConfig config = TrainConfig::from_json_string(ckpt.config_json);
  Rng rng(derive_seed(config.seed, 0x1217));
  Seq2SeqModel model(resolve_model_config(config.task, config.model), rng);
  for (auto& [name, param] : model.params.items) {
    auto stored = ckpt.find(name);
    if (!stored) throw FormatError("checkpoint is missing tensor " + name);
    if (stored->shape != param->shape) {
      throw FormatError("checkpoint tensor " + name + " has shape " + shape_str(stored->shape) +
                        ", model expects " + shape_str(param->shape));
    }
    param->data = stored->data;
  }
  if (config_out) *config_out = config;
  return model;
}

namespace {

std::string format_json_double(double v) {
  return json(v).dump();
}

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%04d.ckpt", epoch);
  return buf;
}

}  // namespace

TrainResult train(const TrainConfig& config) {
  set_default_precision(config.precision);
  ModelConfig model_config = resolve_model_config(config.task, config.model);
  if (config.batch_size < 1 || config.epochs < 0 || config.train_examples < 1 ||
      config.dev_examples < 1) {
    throw ConfigError("invalid training sizes");
  }

  std::filesystem::create_directories(config.out_dir);
  const std::string metrics_path = config.out_dir + "/metrics.jsonl";
  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw ConfigError("cannot open " + metrics_path);

  auto train_data = generate(config.task, config.train_examples);
  TaskSpec dev_spec = config.task;
  dev_spec.seed = derive_seed(config.task.seed, 0xDE77);
  auto dev_data = generate(dev_spec, config.dev_examples);

  Rng model_rng(derive_seed(config.seed, 0x1217));
  Seq2SeqModel model(model_config, model_rng);
  log_info("model parameters: " + std::to_string(model.param_count()));

  AdamState adam;
  adam.hyper = config.adam;
  adam.init(model.params.tensors());

  Rng train_rng(derive_seed(config.seed, 0x7EA1));

  TrainResult result;
  result.metrics_path = metrics_path;
  result.checkpoint_path = config.out_dir + "/" + checkpoint_name(0);
  save_checkpoint(result.checkpoint_path,
                  make_checkpoint(config, model, adam, 0, train_rng.serialize()));

  std::vector<std::size_t> order(train_data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto params = model.params.tensors();
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    // deterministic shuffle
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(train_rng.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double loss_total = 0.0;
    std::size_t done = 0;
    while (done < order.size()) {
      const std::size_t batch_end =
          std::min(order.size(), done + static_cast<std::size_t>(config.batch_size));
      const double batch_n = static_cast<double>(batch_end - done);
      for (std::size_t k = done; k < batch_end; ++k) {
        const Example& ex = train_data[order[k]];
        Tape tape;
        TensorPtr loss;
        if (model.config.continuous()) {
          loss = continuous_example_loss(tape, model, ex.src_symbols, ex.tts);
        } else if (ex.src_frames) {
          loss = discrete_example_loss_frames(tape, model, ex.src_frames, ex.tgt_symbols);
        } else {
          loss = discrete_example_loss(tape, model, ex.src_symbols, ex.tgt_symbols);
        }
        if (!std::isfinite(loss->data[0])) {
          throw ContractError("training diverged (non-finite loss); last good checkpoint: " +
                              result.checkpoint_path);
        }
        loss_total += loss->data[0];
        tape.backward(scale_const(tape, loss, 1.0 / batch_n));
      }
      clip_gradients(params, config.grad_clip);
      adam_step(params, adam);
      for (const auto& p : params) p->zero_grad();
      done = batch_end;
    }

    EvalResult dev = evaluate(model, dev_data);
    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_total / static_cast<double>(train_data.size());
    record.metric_name = dev.metric_name;
    record.metric_value = dev.value;
    result.records.push_back(record);

    metrics << "{\"epoch\":" << epoch << ",\"train_loss\":" << format_json_double(record.train_loss)
            << ",\"" << dev.metric_name << "\":" << format_json_double(dev.value) << "}\n";
    metrics.flush();

    result.checkpoint_path = config.out_dir + "/" + checkpoint_name(epoch);
    save_checkpoint(result.checkpoint_path,
                    make_checkpoint(config, model, adam, epoch, train_rng.serialize()));
    log_info("epoch " + std::to_string(epoch) + " train_loss " +
             std::to_string(record.train_loss) + " " + dev.metric_name + " " +
             std::to_string(dev.value));
  }
  return result;
}

}  // namespace seqattn
