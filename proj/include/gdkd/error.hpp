#pragma once

#include <stdexcept>
#include <string>

namespace gdkd {

enum class ErrorKind {
  InvalidInput,    // non-finite values, malformed data
  Domain,          // argument outside its admissible range
  Shape,           // length mismatch between vectors
  EmptyPartition,  // empty index set
  Config,          // inconsistent loss / run configuration
  Degenerate,      // input for which the operation is undefined
  Training,        // optimisation diverged
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace gdkd
