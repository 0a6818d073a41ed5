#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqattn/model.h"

namespace seqattn {

enum class TaskKind { Copy, Reverse, FramesToSymbols, SymbolsToFrames };

TaskKind task_kind_from_string(const std::string& s);
std::string to_string(TaskKind kind);

// Synthetic transduction task. Generation is a pure function of (spec, n):
// every example draws from a seed derived from (seed, example index), so
// datasets are identical across runs, platforms, and shard splits.
struct TaskSpec {
  TaskKind kind = TaskKind::Copy;
  int vocab = 8;        // includes the reserved pad/bos/eos ids
  int len_min = 5;
  int len_max = 15;
  int rate = 4;         // frames per symbol for the frame tasks
  double noise = 0.0;   // additive Gaussian noise on generated frames
  std::uint64_t seed = 1;
  int frame_dim_m = 8;
  int frame_dim_r = 8;

  bool discrete_source() const { return kind != TaskKind::FramesToSymbols; }
  bool discrete_target() const { return kind != TaskKind::SymbolsToFrames; }
  void validate() const;
};

struct Example {
  std::vector<int> src_symbols;  // discrete sources
  TensorPtr src_frames;          // frame sources, [S, D]
  std::vector<int> tgt_symbols;  // discrete targets (payload ids only)
  TtsTargets tts;                // frame targets
};

std::vector<Example> generate(const TaskSpec& spec, int count);

// Padded batch view over a dataset slice: the data layer appends bos/eos and
// builds masks; the model consumes examples through their true lengths.
struct Batch {
  std::vector<const Example*> items;
  std::vector<Mask> src_masks;
  int max_src = 0;

  // Frame source of one item, zero-padded to max_src rows.
  TensorPtr padded_src_frames(std::size_t index) const;
};
std::vector<Batch> make_batches(const std::vector<Example>& data, int batch_size);

// Line-oriented text serialization: one example per line, fields separated
// by tabs; id fields are space-separated integers, frame fields start with
// "F rows dim" and ending-bit fields with "B", followed by space-separated
// decimals.
void save_dataset(const std::string& path, const std::vector<Example>& data);
std::vector<Example> load_dataset(const std::string& path);

}  // namespace seqattn
