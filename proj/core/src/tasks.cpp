#include "seqattn/tasks.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "seqattn/error.h"

namespace seqattn {

TaskKind task_kind_from_string(const std::string& s) {
  if (s == "copy") return TaskKind::Copy;
  if (s == "reverse") return TaskKind::Reverse;
  if (s == "frames-to-symbols") return TaskKind::FramesToSymbols;
  if (s == "symbols-to-frames") return TaskKind::SymbolsToFrames;
  throw ConfigError("unknown task kind: " + s);
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Copy: return "copy";
    case TaskKind::Reverse: return "reverse";
    case TaskKind::FramesToSymbols: return "frames-to-symbols";
    case TaskKind::SymbolsToFrames: return "symbols-to-frames";
  }
  return "?";
}

void TaskSpec::validate() const {
  if (vocab < kReservedSymbols) {
    throw ConfigError("task vocabulary must be >= " + std::to_string(kReservedSymbols) +
                      " for bos/eos/padding headroom, got " + std::to_string(vocab));
  }
  if (vocab == kReservedSymbols) {
    throw ConfigError("task vocabulary has no payload symbols");
  }
  if (len_min < 1 || len_max < len_min) throw ConfigError("invalid task length range");
  if (rate < 1) throw ConfigError("frames-per-symbol rate must be >= 1");
  if (noise < 0.0) throw ConfigError("noise level must be >= 0");
  if (!discrete_target() || !discrete_source()) {
    if (frame_dim_m < 1 || frame_dim_r < 1) throw ConfigError("frame dims must be >= 1");
  }
}

namespace {

std::vector<int> random_symbols(const TaskSpec& spec, Rng& rng) {
  const int len = rng.uniform_int(spec.len_min, spec.len_max);
  std::vector<int> out(static_cast<std::size_t>(len));
  for (auto& s : out) s = rng.uniform_int(kReservedSymbols, spec.vocab - 1);
  return out;
}

// Per-symbol anchor vectors are a function of the task seed alone so the
// mapping is stable across the whole dataset.
std::vector<double> symbol_anchor(const TaskSpec& spec, int symbol, int dim,
                                  std::uint64_t stream) {
  Rng rng(derive_seed(spec.seed, stream + static_cast<std::uint64_t>(symbol)));
  std::vector<double> v(static_cast<std::size_t>(dim));
  for (auto& x : v) x = rng.uniform(0.0, 1.0);
  return v;
}

Example make_example(const TaskSpec& spec, std::uint64_t index) {
  Rng rng(derive_seed(spec.seed, index));
  Example ex;
  switch (spec.kind) {
    case TaskKind::Copy: {
      ex.src_symbols = random_symbols(spec, rng);
      ex.tgt_symbols = ex.src_symbols;
      break;
    }
    case TaskKind::Reverse: {
      ex.src_symbols = random_symbols(spec, rng);
      ex.tgt_symbols.assign(ex.src_symbols.rbegin(), ex.src_symbols.rend());
      break;
    }
    case TaskKind::FramesToSymbols: {
      ex.tgt_symbols = random_symbols(spec, rng);
      const int frames = static_cast<int>(ex.tgt_symbols.size()) * spec.rate;
      ex.src_frames = Tensor::create({frames, spec.vocab});
      int f = 0;
      for (int sym : ex.tgt_symbols) {
        for (int j = 0; j < spec.rate; ++j, ++f) {
          double* frame = ex.src_frames->data.data() + static_cast<std::size_t>(f) * spec.vocab;
          frame[sym] = 1.0;
          if (spec.noise > 0.0) {
            for (int d = 0; d < spec.vocab; ++d) frame[d] += spec.noise * rng.normal();
          }
        }
      }
      break;
    }
    case TaskKind::SymbolsToFrames: {
      ex.src_symbols = random_symbols(spec, rng);
      const int frames = static_cast<int>(ex.src_symbols.size()) * spec.rate;
      ex.tts.frames_m = Tensor::create({frames, spec.frame_dim_m});
      ex.tts.frames_r = Tensor::create({frames, spec.frame_dim_r});
      ex.tts.ending.assign(static_cast<std::size_t>(frames), 0.0);
      ex.tts.ending.back() = 1.0;
      std::vector<double> prev_m(static_cast<std::size_t>(spec.frame_dim_m), 0.0);
      std::vector<double> prev_r(static_cast<std::size_t>(spec.frame_dim_r), 0.0);
      int f = 0;
      for (int sym : ex.src_symbols) {
        auto anchor_m = symbol_anchor(spec, sym, spec.frame_dim_m, 0xA000);
        auto anchor_r = symbol_anchor(spec, sym, spec.frame_dim_r, 0xB000);
        for (int j = 0; j < spec.rate; ++j, ++f) {
          const double alpha = static_cast<double>(j + 1) / spec.rate;
          double* fm = ex.tts.frames_m->data.data() +
                       static_cast<std::size_t>(f) * spec.frame_dim_m;
          double* fr = ex.tts.frames_r->data.data() +
                       static_cast<std::size_t>(f) * spec.frame_dim_r;
          for (int d = 0; d < spec.frame_dim_m; ++d) {
            fm[d] = (1.0 - alpha) * prev_m[static_cast<std::size_t>(d)] +
                    alpha * anchor_m[static_cast<std::size_t>(d)];
            if (spec.noise > 0.0) fm[d] += spec.noise * rng.normal();
          }
          for (int d = 0; d < spec.frame_dim_r; ++d) {
            fr[d] = (1.0 - alpha) * prev_r[static_cast<std::size_t>(d)] +
                    alpha * anchor_r[static_cast<std::size_t>(d)];
            if (spec.noise > 0.0) fr[d] += spec.noise * rng.normal();
          }
        }
        prev_m = anchor_m;
        prev_r = anchor_r;
      }
      break;
    }
  }
  return ex;
}

}  // namespace

std::vector<Example> generate(const TaskSpec& spec, int count) {
  spec.validate();
  if (count < 0) throw ConfigError("generate: negative count");
  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(make_example(spec, static_cast<std::uint64_t>(i)));
  return out;
}

TensorPtr Batch::padded_src_frames(std::size_t index) const {
  if (index >= items.size()) throw DataError("batch item index out of range");
  const Example& ex = *items[index];
  if (!ex.src_frames) throw DataError("example has a symbol source, not frames");
  const int rows = ex.src_frames->dim(0);
  const int dim = ex.src_frames->dim(1);
  auto padded = Tensor::create({max_src, dim});
  std::copy_n(ex.src_frames->data.data(), static_cast<std::size_t>(rows) * dim,
              padded->data.data());
  return padded;
}

std::vector<Batch> make_batches(const std::vector<Example>& data, int batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<Batch> batches;
  for (std::size_t i = 0; i < data.size(); i += static_cast<std::size_t>(batch_size)) {
    Batch b;
    const std::size_t end = std::min(data.size(), i + static_cast<std::size_t>(batch_size));
    for (std::size_t j = i; j < end; ++j) {
      const Example& ex = data[j];
      const int len = ex.src_frames ? ex.src_frames->dim(0)
                                    : static_cast<int>(ex.src_symbols.size());
      b.items.push_back(&ex);
      b.max_src = std::max(b.max_src, len);
    }
    for (const Example* ex : b.items) {
      const int len = ex->src_frames ? ex->src_frames->dim(0)
                                     : static_cast<int>(ex->src_symbols.size());
      b.src_masks.emplace_back(len, b.max_src);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_ids(std::ostream& os, const std::vector<int>& ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) os << ' ';
    os << ids[i];
  }
}

void write_frames(std::ostream& os, const TensorPtr& frames) {
  os << "F " << frames->dim(0) << ' ' << frames->dim(1);
  for (double v : frames->data) os << ' ' << format_double(v);
}

void write_bits(std::ostream& os, const std::vector<double>& bits) {
  os << "B";
  for (double v : bits) os << ' ' << (v == 1.0 ? 1 : 0);
}

std::vector<int> parse_ids(const std::string& field) {
  std::istringstream is(field);
  std::vector<int> ids;
  int v;
  while (is >> v) ids.push_back(v);
  if (is.fail() && !is.eof()) throw FormatError("bad id field: " + field);
  return ids;
}

TensorPtr parse_frames(const std::string& field) {
  std::istringstream is(field);
  std::string tag;
  int rows, cols;
  if (!(is >> tag >> rows >> cols) || tag != "F") throw FormatError("bad frame field");
  auto t = Tensor::create({rows, cols});
  for (auto& v : t->data) {
    if (!(is >> v)) throw FormatError("frame field too short");
  }
  return t;
}

std::vector<double> parse_bits(const std::string& field) {
  std::istringstream is(field);
  std::string tag;
  if (!(is >> tag) || tag != "B") throw FormatError("bad bits field");
  std::vector<double> bits;
  int v;
  while (is >> v) bits.push_back(v == 1 ? 1.0 : 0.0);
  return bits;
}

}  // namespace

void save_dataset(const std::string& path, const std::vector<Example>& data) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  for (const Example& ex : data) {
    if (ex.src_frames) {
      write_frames(os, ex.src_frames);
    } else {
      write_ids(os, ex.src_symbols);
    }
    os << '\t';
    if (ex.tts.frames_m) {
      write_frames(os, ex.tts.frames_m);
      os << '\t';
      write_frames(os, ex.tts.frames_r);
      os << '\t';
      write_bits(os, ex.tts.ending);
    } else {
      write_ids(os, ex.tgt_symbols);
    }
    os << '\n';
  }
}

std::vector<Example> load_dataset(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  std::vector<Example> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    Example ex;
    if (fields[0].rfind("F ", 0) == 0) {
      ex.src_frames = parse_frames(fields[0]);
    } else {
      ex.src_symbols = parse_ids(fields[0]);
    }
    if (fields.size() == 2) {
      ex.tgt_symbols = parse_ids(fields[1]);
    } else if (fields.size() == 4) {
      ex.tts.frames_m = parse_frames(fields[1]);
      ex.tts.frames_r = parse_frames(fields[2]);
      ex.tts.ending = parse_bits(fields[3]);
    } else {
      throw FormatError("record with " + std::to_string(fields.size()) + " fields");
    }
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace seqattn
