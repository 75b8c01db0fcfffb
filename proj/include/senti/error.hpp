#pragma once

#include <stdexcept>
#include <string>

namespace senti {

// Category drives the CLI exit code: usage -> 1, data -> 2, internal -> 3.
enum class ErrorKind { usage, data, internal };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& what) { return Error(ErrorKind::usage, what); }
inline Error data_error(const std::string& what) { return Error(ErrorKind::data, what); }
inline Error internal_error(const std::string& what) { return Error(ErrorKind::internal, what); }

}  // namespace senti
