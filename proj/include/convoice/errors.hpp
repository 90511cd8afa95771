// convoice/errors.hpp
//
// Exception types thrown across the library. Every error derives from
// convoice::Error so callers can catch one type at the pipeline boundary.

#pragma once

#include <stdexcept>
#include <string>

namespace convoice {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor dimension mismatch; the message names the offending axis.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Value outside the mathematical domain (negative variance, zero std, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Inconsistent configuration (bad frontend parameters, rate mismatch, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (WAV chunks, JSON configs).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Caller supplied unusable input (empty audio, infeasible CTC target, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, long step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace convoice
