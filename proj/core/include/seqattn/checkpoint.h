#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "seqattn/tensor.h"

namespace seqattn {

// Versioned binary snapshot of a training run: config JSON, epoch counter,
// serialized RNG state, then length-prefixed named float64 tensors (model
// parameters and optimizer moments). save(load(x)) is byte-identical.
struct Checkpoint {
  std::uint32_t version = 1;
  std::string config_json;
  std::int64_t epoch = 0;
  std::string rng_state;
  std::vector<std::pair<std::string, TensorPtr>> tensors;

  TensorPtr find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace seqattn
