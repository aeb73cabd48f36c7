#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sapo {

/// Caller supplied something outside an operation's domain.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Broken internal consistency (mismatched lengths between stored buffers, etc.).
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A NaN or infinity surfaced while evaluating an objective or gradient.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::size_t sequence, std::size_t token)
      : std::runtime_error(what + " (sequence " + std::to_string(sequence) + ", token " +
                           std::to_string(token) + ")"),
        sequence_(sequence),
        token_(token) {}

  std::size_t sequence() const noexcept { return sequence_; }
  std::size_t token() const noexcept { return token_; }

 private:
  std::size_t sequence_;
  std::size_t token_;
};

}  // namespace sapo
