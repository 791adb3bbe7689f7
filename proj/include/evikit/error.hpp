#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace evikit {

enum class ErrorKind {
  usage,          // malformed flags or ranges
  configuration,  // well-formed but unusable settings (empty split, M < 2, ...)
  data,           // inconsistent or missing input records
  structural,     // mismatched shapes between arguments
  validation,     // values outside their domain
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Process exit code for an error: 2 for usage errors, 1 otherwise.
int exit_code(ErrorKind kind) noexcept;

}  // namespace evikit
