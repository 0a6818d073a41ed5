#include "seqattn/attention_export.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "seqattn/decoding.h"
#include "seqattn/error.h"
#include "seqattn/tasks.h"
#include "seqattn/train.h"

namespace seqattn {

void write_alignment_csv(const TensorPtr& matrix, std::ostream& os) {
  if (!matrix || matrix->rank() != 2) throw ContractError("alignment matrix must be [T,S']");
  const int rows = matrix->dim(0);
  const int cols = matrix->dim(1);
  char buf[40];
  for (int t = 0; t < rows; ++t) {
    for (int s = 0; s < cols; ++s) {
      std::snprintf(buf, sizeof(buf), "%.17g", matrix->data[static_cast<std::size_t>(t) * cols + s]);
      if (s) os << ',';
      os << buf;
    }
    os << '\n';
  }
}

TensorPtr read_alignment_csv(std::istream& is) {
  std::vector<double> values;
  int cols = -1, rows = 0;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row_stream(line);
    std::string cell;
    int row_cols = 0;
    while (std::getline(row_stream, cell, ',')) {
      values.push_back(std::stod(cell));
      ++row_cols;
    }
    if (cols < 0) {
      cols = row_cols;
    } else if (cols != row_cols) {
      throw FormatError("csv rows have inconsistent widths");
    }
    ++rows;
  }
  if (rows == 0) throw FormatError("empty alignment csv");
  return Tensor::from({rows, cols}, std::move(values));
}

void write_alignment_pgm(const TensorPtr& matrix, std::ostream& os) {
  if (!matrix || matrix->rank() != 2) throw ContractError("alignment matrix must be [T,S']");
  const int rows = matrix->dim(0);
  const int cols = matrix->dim(1);
  os << "P5\n" << cols << ' ' << rows << "\n255\n";
  for (double v : matrix->data) {
    const double clamped = std::min(std::max(v, 0.0), 1.0);
    os.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * clamped))));
  }
}

void export_attention(const std::string& checkpoint_path, const std::string& input_path,
                      const std::string& format, const std::string& output_path) {
  if (format != "csv" && format != "pgm") {
    throw ConfigError("export format must be csv or pgm, got " + format);
  }
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  Seq2SeqModel model = model_from_checkpoint(ckpt);
  auto data = load_dataset(input_path);
  if (data.empty()) throw DataError("input file " + input_path + " has no records");
  const Example& ex = data.front();

  TensorPtr alignment;
  if (model.config.continuous()) {
    const int cap = ex.tts.frames_m ? 3 * ex.tts.frames_m->dim(0)
                                    : 3 * static_cast<int>(ex.src_symbols.size()) *
                                          model.config.frames_per_step;
    alignment = tts_infer(model, ex.src_symbols, cap).alignment;
  } else {
    Tape tape(false);
    auto [hE, mask] = ex.src_frames
                          ? model.encode_frames(tape, ex.src_frames,
                                                Mask::full(ex.src_frames->dim(0)))
                          : model.encode_symbols(tape, ex.src_symbols);
    alignment = greedy_decode(model, hE, mask, default_max_len(mask.length)).alignment;
  }

  std::ofstream os(output_path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + output_path + " for writing");
  if (format == "csv") {
    write_alignment_csv(alignment, os);
  } else {
    write_alignment_pgm(alignment, os);
  }
}

}  // namespace seqattn
