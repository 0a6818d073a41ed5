#include "seqattn/tensor.h"

#include <atomic>
#include <cmath>
#include <sstream>

#include "seqattn/error.h"

namespace seqattn {

namespace {
std::atomic<Precision> g_precision{Precision::Double};
}

void set_default_precision(Precision p) { g_precision.store(p); }
Precision default_precision() { return g_precision.load(); }

std::int64_t numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void Tensor::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

void Tensor::zero_grad() {
  if (!grad.empty()) grad.assign(grad.size(), 0.0);
}

TensorPtr Tensor::create(std::vector<int> shape, bool requires_grad) {
  for (int d : shape) {
    if (d <= 0) throw DimensionError("tensor extent must be positive, got " + shape_str(shape));
  }
  auto t = std::make_shared<Tensor>();
  t->data.assign(static_cast<std::size_t>(numel(shape)), 0.0);
  t->shape = std::move(shape);
  t->requires_grad = requires_grad;
  if (requires_grad) t->ensure_grad();
  return t;
}

TensorPtr Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  if (numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto t = Tensor::create(std::move(shape), requires_grad);
  t->data = std::move(values);
  return t;
}

TensorPtr Tensor::scalar(double value, bool requires_grad) {
  return Tensor::from({1}, {value}, requires_grad);
}

TensorPtr Tensor::one_hot(int size, int index) {
  if (index < 0 || index >= size) {
    throw DimensionError("one_hot index " + std::to_string(index) + " out of range [0," +
                         std::to_string(size) + ")");
  }
  auto t = Tensor::create({size});
  t->data[static_cast<std::size_t>(index)] = 1.0;
  return t;
}

void Mask::validate(int positions) const {
  if (length < 1 || length > positions) {
    throw MaskError("mask length " + std::to_string(length) + " invalid for " +
                    std::to_string(positions) + " positions");
  }
}

void Tape::backward(const TensorPtr& root) {
  if (!root) throw ContractError("backward: null root");
  if (root->size() != 1) {
    throw ContractError("backward root must be scalar, got " + shape_str(root->shape));
  }
  if (!root->requires_grad) {
    throw ContractError("backward root does not require grad");
  }
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

double Rng::uniform() {
  // 53 random bits -> [0,1) with full double resolution.
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  // Irwin-Hall sum of 12 uniforms. Slightly truncated tails (+-6 sigma) but
  // uses only additions on portable uniform bits, so generated data is
  // byte-identical across platforms, unlike libm-backed Box-Muller.
  double sum = 0.0;
  for (int i = 0; i < 12; ++i) sum += uniform();
  return sum - 6.0;
}

int Rng::uniform_int(int lo, int hi) {
  if (hi < lo) throw ConfigError("uniform_int: empty range");
  std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
  // Rejection sampling keeps the draw exactly uniform.
  std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % span;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return lo + static_cast<int>(x % span);
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::deserialize(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (is.fail()) throw FormatError("invalid rng state");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over the combined value.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

TensorPtr ParamMap::add(const std::string& name, TensorPtr t) {
  if (find(name)) throw ConfigError("duplicate parameter name: " + name);
  t->name = name;
  t->requires_grad = true;
  t->ensure_grad();
  items.emplace_back(name, t);
  return t;
}

TensorPtr ParamMap::find(const std::string& name) const {
  for (const auto& [n, t] : items) {
    if (n == name) return t;
  }
  return nullptr;
}

std::vector<TensorPtr> ParamMap::tensors() const {
  std::vector<TensorPtr> out;
  out.reserve(items.size());
  for (const auto& [n, t] : items) out.push_back(t);
  return out;
}

std::int64_t ParamMap::total_size() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : items) n += t->size();
  return n;
}

TensorPtr init_uniform(std::vector<int> shape, int fan_in, int fan_out, Rng& rng) {
  double bound = std::sqrt(6.0 / (static_cast<double>(fan_in) + static_cast<double>(fan_out)));
  auto t = Tensor::create(std::move(shape));
  for (auto& v : t->data) v = rng.uniform(-bound, bound);
  return t;
}

}  // namespace seqattn
