#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace amlmc {

/// Invalid numeric argument (non-positive step, index out of range, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation called in a context where it is not defined.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Bad or inconsistent configuration (level cap exceeded, unknown model, ...).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A simulated sample produced a non-finite payoff. Carries the offending key.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(int level, std::uint64_t sample)
      : std::runtime_error("non-finite payoff at level " + std::to_string(level) + ", sample " +
                           std::to_string(sample)),
        level_(level),
        sample_(sample) {}

  int level() const noexcept { return level_; }
  std::uint64_t sample() const noexcept { return sample_; }

 private:
  int level_;
  std::uint64_t sample_;
};

/// Every particle of a filter leg received zero (or non-finite) likelihood.
class DegenerateWeightsError : public std::runtime_error {
 public:
  DegenerateWeightsError(int step, int leg)
      : std::runtime_error("degenerate likelihood weights at observation step " + std::to_string(step) +
                           " (leg " + std::to_string(leg) + ")"),
        step_(step),
        leg_(leg) {}

  int step() const noexcept { return step_; }
  int leg() const noexcept { return leg_; }

 private:
  int step_;
  int leg_;
};

/// Malformed text input; `line` is 1-based.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, int line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

  int line() const noexcept { return line_; }

 private:
  int line_;
};

}  // namespace amlmc
