#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace seqattn {

// Global numeric precision. Double is the default and the mode all oracle
// and gradient tests run in. Single keeps double storage but rounds every
// op result (values and gradient accumulations) through float32. The mode
// is process-global and must not change mid-run.
enum class Precision { Double, Single };

void set_default_precision(Precision p);
Precision default_precision();

std::int64_t numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major tensor with an optional same-shape gradient slot.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty unless requires_grad
  bool requires_grad = false;
  std::string name;  // set for named parameters, empty otherwise

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  int rows() const { return rank() == 2 ? shape[0] : (rank() == 1 ? shape[0] : 1); }
  int cols() const { return rank() == 2 ? shape[1] : 1; }

  void ensure_grad();
  void zero_grad();

  static TensorPtr create(std::vector<int> shape, bool requires_grad = false);
  static TensorPtr from(std::vector<int> shape, std::vector<double> values,
                        bool requires_grad = false);
  static TensorPtr scalar(double value, bool requires_grad = false);
  static TensorPtr one_hot(int size, int index);
};

// Valid-prefix mask over a padded axis: positions [0, length) are valid.
struct Mask {
  int length = 0;
  int total = 0;

  Mask() = default;
  Mask(int length_, int total_) : length(length_), total(total_) {}
  static Mask full(int n) { return Mask(n, n); }
  bool is_full() const { return length == total; }
  // Checks 1 <= length <= positions; throws MaskError otherwise.
  void validate(int positions) const;
};

// Reverse-mode tape. Ops append backward closures during the forward pass;
// backward() seeds the root gradient and replays them in reverse. A
// non-recording tape turns every op into a plain forward evaluation.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }
  std::size_t size() const { return steps_.size(); }
  void clear() { steps_.clear(); }

  // root must be a scalar tensor that requires grad.
  void backward(const TensorPtr& root);

 private:
  bool recording_;
  std::vector<std::function<void()>> steps_;
};

// Deterministic random source. All distributions are implemented on top of
// the raw mt19937_64 stream so sequences are identical across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();                         // [0, 1)
  double uniform(double lo, double hi);     // [lo, hi)
  double normal();                          // ~N(0,1), Irwin-Hall of 12 uniforms
  int uniform_int(int lo, int hi);          // inclusive bounds

  std::string serialize() const;
  void deserialize(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

// Stable seed derivation for independent streams (examples, epochs, shards).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Ordered registry of named trainable tensors. Order is the canonical
// iteration order for the optimizer and the checkpoint format.
struct ParamMap {
  std::vector<std::pair<std::string, TensorPtr>> items;

  TensorPtr add(const std::string& name, TensorPtr t);
  TensorPtr find(const std::string& name) const;  // null when absent
  std::vector<TensorPtr> tensors() const;
  std::int64_t total_size() const;
};

// Glorot-uniform initialized parameter of the given shape.
TensorPtr init_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng);

}  // namespace seqattn
