#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dopacast {

/// Process exit codes shared by every CLI subcommand.
enum class ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kValidation = 3,
  kNumeric = 4,
  kIo = 5,
};

/// One broken invariant: which field, which rule.
struct Violation {
  std::string field;
  std::string rule;

  friend bool operator==(const Violation&, const Violation&) = default;
};

std::string describe(const std::vector<Violation>& violations);

class Error : public std::runtime_error {
 public:
  Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error(ExitCode::kUsage, what) {}
};

/// Input data breaks a domain invariant. Carries the full violation list.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<Violation> violations)
      : Error(ExitCode::kValidation, describe(violations)), violations_(std::move(violations)) {}
  explicit ValidationError(const std::string& what) : Error(ExitCode::kValidation, what) {}
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  std::vector<Violation> violations_;
};

/// NaN/Inf in weights, losses or outputs.
class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what) : Error(ExitCode::kNumeric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ExitCode::kIo, what) {}
};

}  // namespace dopacast
