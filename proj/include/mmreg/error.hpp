// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace mmreg {

enum class ErrorKind {
    Validation,   // bad shapes, bad config, precondition violated
    Numeric,      // non-finite value produced or consumed
    Io,           // unreadable / unwritable file
    CheckFailed,  // a theory or acceptance check did not hold
};

class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(const std::string& what) { throw Error(ErrorKind::Validation, what); }
[[noreturn]] inline void fail_numeric(const std::string& what) { throw Error(ErrorKind::Numeric, what); }
[[noreturn]] inline void fail_io(const std::string& what) { throw Error(ErrorKind::Io, what); }

inline void require(bool cond, const std::string& what) {
    if (!cond) fail(what);
}

} // namespace mmreg
