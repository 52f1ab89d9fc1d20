#pragma once

#include <stdexcept>
#include <string>

namespace triad {

// Broad failure classes; the CLI maps them onto exit codes.
enum class ErrorKind { usage, data, model };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct UsageError : Error {
  explicit UsageError(const std::string& what) : Error(ErrorKind::usage, what) {}
};

struct DataError : Error {
  explicit DataError(const std::string& what) : Error(ErrorKind::data, what) {}
};

struct ModelError : Error {
  explicit ModelError(const std::string& what) : Error(ErrorKind::model, what) {}
};

}  // namespace triad
