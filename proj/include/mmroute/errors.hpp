#pragma once

#include <stdexcept>
#include <string>

namespace mmroute {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

// Non-finite values, or a log/division that would leave the finite range.
struct NumericError : Error {
  using Error::Error;
};

// Caller broke an API precondition (non-scalar loss, empty batch, ...).
struct ContractError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct SynthesisError : Error {
  using Error::Error;
};

struct ComparisonError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

class TrainError : public Error {
public:
  TrainError(const std::string& what, int epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  int epoch() const { return epoch_; }

private:
  int epoch_;
};

}  // namespace mmroute
