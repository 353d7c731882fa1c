#pragma once

#include <optional>
#include <stdexcept>
#include <string>

namespace simtrack {

enum class ErrorKind { kUsage = 1, kStructural = 2, kHypothesis = 3, kSynthesis = 4 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string stage, const std::string& message,
        std::optional<double> achieved = std::nullopt)
      : std::runtime_error(stage + ": " + message),
        kind_(kind),
        stage_(std::move(stage)),
        achieved_(achieved) {}

  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }
  const std::string& stage() const { return stage_; }
  // Best value reached before giving up (residual, distance, tail), if any.
  std::optional<double> achieved() const { return achieved_; }

 private:
  ErrorKind kind_;
  std::string stage_;
  std::optional<double> achieved_;
};

class StructuralError : public Error {
 public:
  StructuralError(std::string stage, const std::string& message,
                  std::optional<double> achieved = std::nullopt)
      : Error(ErrorKind::kStructural, std::move(stage), message, achieved) {}
};

class HypothesisError : public Error {
 public:
  HypothesisError(std::string stage, const std::string& message,
                  std::optional<double> achieved = std::nullopt)
      : Error(ErrorKind::kHypothesis, std::move(stage), message, achieved) {}
};

class SynthesisError : public Error {
 public:
  SynthesisError(std::string stage, const std::string& message,
                 std::optional<double> achieved = std::nullopt)
      : Error(ErrorKind::kSynthesis, std::move(stage), message, achieved) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& message)
      : Error(ErrorKind::kUsage, "cli", message) {}
};

}  // namespace simtrack
