#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace seqattn {

// Base class for every failure the library signals. `code` is a short
// machine-readable tag; the CLI prints it as part of its one-line error.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

// Shape disagreement between operands.
class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& m) : Error("dimension", m) {}
};

// Invalid static configuration (widths, orders, config files, ...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& m) : Error("config", m) {}
};

// Mask does not describe a usable set of valid positions.
class MaskError : public Error {
 public:
  explicit MaskError(const std::string& m) : Error("mask", m) {}
};

// A runtime contract was violated (unnormalized alignment, uninitialized
// history, non-finite loss, ...).
class ContractError : public Error {
 public:
  explicit ContractError(const std::string& m) : Error("contract", m) {}
};

// History queue used with the wrong number of entries.
class HistoryError : public Error {
 public:
  explicit HistoryError(const std::string& m) : Error("history", m) {}
};

// Malformed input data (symbols outside the vocabulary, bad records, ...).
class DataError : public Error {
 public:
  explicit DataError(const std::string& m) : Error("data", m) {}
};

// A metric was requested on inputs where it is undefined.
class MetricError : public Error {
 public:
  explicit MetricError(const std::string& m) : Error("metric", m) {}
};

// Unreadable or incompatible serialized artifact (checkpoint, dataset).
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& m) : Error("format", m) {}
};

}  // namespace seqattn
