#pragma once

#include <stdexcept>
#include <string>

namespace spext {

// Error categories map one-to-one onto the CLI exit codes.
enum class ErrorKind { kValidation = 1, kConvergence = 2, kIo = 3 };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& what) {
  throw Error(ErrorKind::kValidation, what);
}

[[noreturn]] inline void fail_io(const std::string& what) {
  throw Error(ErrorKind::kIo, what);
}

}  // namespace spext
