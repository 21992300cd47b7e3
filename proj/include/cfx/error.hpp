#pragma once

#include <stdexcept>
#include <string>

namespace cfx {

/// Root of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes disagree with what an operation needs.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A configuration value is outside its documented range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an API contract (non-scalar loss, unfrozen dependency, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. The message names the byte offset where parsing stopped.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, int epoch, long step)
      : Error(what + " (epoch " + std::to_string(epoch) + ", step " + std::to_string(step) + ")"),
        epoch_(epoch),
        step_(step) {}
  int epoch() const noexcept { return epoch_; }
  long step() const noexcept { return step_; }

 private:
  int epoch_;
  long step_;
};

/// A pipeline stage is missing an input that an earlier stage should have produced.
class PrerequisiteError : public Error {
 public:
  using Error::Error;
};

/// A post-condition of the evaluation protocol does not hold.
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace cfx
