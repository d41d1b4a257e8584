#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tailforge {

// Process exit codes used by the command-line tool. Each error category below
// maps onto exactly one of them.
enum class ExitCode : int {
  ok = 0,
  failure = 1,
  validation = 2,
  data_deficit = 3,
  divergence = 4,
};

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual ExitCode exit_code() const noexcept { return ExitCode::failure; }
};

// Malformed input, bad shapes, out-of-range parameters.
class ValidationError : public Error {
 public:
  using Error::Error;
  ExitCode exit_code() const noexcept override { return ExitCode::validation; }
};

class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Input whose geometry makes an operation undefined (e.g. a zero-norm row
// fed to cosine similarity).
class DegenerateInputError : public ValidationError {
 public:
  DegenerateInputError(const std::string& what, std::size_t row)
      : ValidationError(what), row_(row) {}
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

class EmptyProfileError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class EpsilonTooSmallError : public ValidationError {
 public:
  EpsilonTooSmallError(const std::string& what, double required_epsilon)
      : ValidationError(what), required_(required_epsilon) {}
  // Any epsilon strictly greater than this value satisfies the precondition.
  double required_epsilon() const noexcept { return required_; }

 private:
  double required_;
};

class InfeasibleProfileError : public ValidationError {
 public:
  InfeasibleProfileError(const std::string& what, long long min_total,
                         long long max_total)
      : ValidationError(what), min_total_(min_total), max_total_(max_total) {}
  long long min_total() const noexcept { return min_total_; }
  long long max_total() const noexcept { return max_total_; }

 private:
  long long min_total_;
  long long max_total_;
};

struct ClassDeficit {
  int class_id = 0;
  std::string split;
  long long required = 0;
  long long available = 0;
};

// Not enough source samples to satisfy a curation or augmentation request.
class DataDeficitError : public Error {
 public:
  explicit DataDeficitError(std::vector<ClassDeficit> deficits)
      : Error(describe(deficits)), deficits_(std::move(deficits)) {}
  ExitCode exit_code() const noexcept override { return ExitCode::data_deficit; }
  const std::vector<ClassDeficit>& deficits() const noexcept { return deficits_; }

 private:
  static std::string describe(const std::vector<ClassDeficit>& deficits) {
    std::string msg = "insufficient samples for " + std::to_string(deficits.size()) +
                      " class(es):";
    for (const auto& d : deficits) {
      msg += " [class " + std::to_string(d.class_id) + " " + d.split + ": need " +
             std::to_string(d.required) + ", have " + std::to_string(d.available) + "]";
    }
    return msg;
  }

  std::vector<ClassDeficit> deficits_;
};

// Non-finite loss or gradient during optimisation.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, long long step)
      : Error(what + " at step " + std::to_string(step)), step_(step) {}
  ExitCode exit_code() const noexcept override { return ExitCode::divergence; }
  long long step() const noexcept { return step_; }

 private:
  long long step_;
};

}  // namespace tailforge
