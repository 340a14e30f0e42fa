#pragma once

#include <stdexcept>
#include <string>

namespace carnot {

/// Failure categories. The CLI maps them onto exit codes.
enum class ErrorKind {
  Validation,   // malformed or inconsistent input
  Capacity,     // configured size limit exceeded
  Mismatch,     // fixture or acceptance table disagreement
  BlowUp,       // numeric integration left the admissible region
  Inconsistent  // internal classification/normal-form disagreement
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error validation_error(const std::string& what) { return {ErrorKind::Validation, what}; }
inline Error capacity_error(const std::string& what) { return {ErrorKind::Capacity, what}; }

}  // namespace carnot
