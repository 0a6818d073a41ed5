#include "seqattn/checkpoint.h"

#include <cstring>
#include <fstream>

#include "seqattn/error.h"

namespace seqattn {

namespace {

constexpr char kMagic[8] = {'S', 'Q', 'A', 'T', 'N', 'C', 'K', 'P'};

void write_u32(std::ostream& os, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, 8);
}

void write_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  write_u64(os, bits);
}

void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  if (!is) throw FormatError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw FormatError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& is) {
  const std::uint64_t bits = read_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

std::string read_string(std::istream& is) {
  const std::uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw FormatError("checkpoint truncated");
  return s;
}

}  // namespace

TensorPtr Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  os.write(kMagic, 8);
  write_u32(os, ckpt.version);
  write_u64(os, static_cast<std::uint64_t>(ckpt.epoch));
  write_string(os, ckpt.config_json);
  write_string(os, ckpt.rng_state);
  write_u32(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    write_string(os, name);
    write_u32(os, static_cast<std::uint32_t>(t->shape.size()));
    for (int d : t->shape) write_u32(os, static_cast<std::uint32_t>(d));
    write_u64(os, static_cast<std::uint64_t>(t->data.size()));
    for (double v : t->data) write_f64(os, v);
  }
  if (!os) throw FormatError("write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError("not a checkpoint file: " + path);
  }
  Checkpoint ckpt;
  ckpt.version = read_u32(is);
  if (ckpt.version != 1) {
    throw FormatError("unsupported checkpoint version " + std::to_string(ckpt.version));
  }
  ckpt.epoch = static_cast<std::int64_t>(read_u64(is));
  ckpt.config_json = read_string(is);
  ckpt.rng_state = read_string(is);
  const std::uint32_t count = read_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(is);
    const std::uint32_t rank = read_u32(is);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(read_u32(is));
    const std::uint64_t n = read_u64(is);
    if (n != static_cast<std::uint64_t>(numel(shape))) {
      throw FormatError("checkpoint tensor " + name + " has inconsistent sizes");
    }
    auto t = Tensor::create(shape);
    for (auto& v : t->data) v = read_f64(is);
    ckpt.tensors.emplace_back(name, t);
  }
  return ckpt;
}

}  // namespace seqattn
