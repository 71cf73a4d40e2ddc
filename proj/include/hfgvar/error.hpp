#pragma once

#include <stdexcept>
#include <string>

namespace hfgvar {

// Error categories double as CLI exit codes.
enum class ErrorKind : int {
  config = 2,
  data = 3,
  numerical = 4,
  identification = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config error";
    case ErrorKind::data: return "data error";
    case ErrorKind::numerical: return "numerical failure";
    case ErrorKind::identification: return "identification exhaustion";
  }
  return "error";
}

}  // namespace hfgvar
