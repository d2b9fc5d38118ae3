#pragma once

#include <stdexcept>
#include <string>

namespace micas {

/// Failure category carried by every exception the library throws. The C API
/// maps these one-to-one onto its status codes.
enum class ErrorKind {
  Domain,         // precondition on a value or shape violated
  Contract,       // caller broke a usage contract (e.g. non-scalar loss)
  Numeric,        // a computation produced a non-finite value
  Configuration,  // missing or inconsistent configuration / checkpoints
  Io,             // filesystem failure
  Format,         // malformed file content
};

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

inline void require(bool cond, ErrorKind kind, const char* what) {
  if (!cond) throw Error(kind, what);
}

inline void require_domain(bool cond, const char* what) {
  require(cond, ErrorKind::Domain, what);
}

}  // namespace micas
