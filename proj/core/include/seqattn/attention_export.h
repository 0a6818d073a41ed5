#pragma once

#include <iosfwd>
#include <string>

#include "seqattn/tensor.h"

namespace seqattn {

// One decoder step per row, comma-separated decimals.
void write_alignment_csv(const TensorPtr& matrix, std::ostream& os);
TensorPtr read_alignment_csv(std::istream& is);

// Binary 8-bit PGM (P5): width = encoder positions, height = decoder steps,
// pixel = round(255 * alignment weight).
void write_alignment_pgm(const TensorPtr& matrix, std::ostream& os);

// Loads a checkpoint, decodes the first record of the input file, and writes
// the alignment matrix in the requested format ("csv" or "pgm").
void export_attention(const std::string& checkpoint_path, const std::string& input_path,
                      const std::string& format, const std::string& output_path);

}  // namespace seqattn
