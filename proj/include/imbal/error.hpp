#pragma once

#include <stdexcept>
#include <string>

namespace imbal {

enum class ErrorKind {
  kUsage,      // caller violated a precondition
  kFormat,     // malformed file header or structure
  kData,       // well-formed input with invalid values
  kAlignment,  // record id sets do not line up
  kResample,   // rebalancing impossible for this dataset
  kNumeric,    // non-finite loss or gradient during training
  kIo,         // file could not be opened, read or written
  kConfig,     // experiment config violates its schema
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace imbal
