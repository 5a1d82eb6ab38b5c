#pragma once

#include <stdexcept>
#include <string>

namespace kas {

enum class ErrorKind {
  kDimension,
  kNumeric,
  kIndex,
  kContract,
  kCorpus,
  kAnnotation,
  kAlignment,
  kFormat,
  kIo,
  kConfig,
  kCheck,
};

const char* error_kind_name(ErrorKind kind);

// Every failure raised by the library carries one of the kinds above so the C
// layer can translate it to a status code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace kas
