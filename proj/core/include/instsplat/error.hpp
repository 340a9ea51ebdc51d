// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace instsplat {

/// Machine-readable failure category. The service maps these onto HTTP
/// status codes; the CLI prints them in front of the message.
enum class ErrorCode {
    Validation, ///< malformed or dimensionally inconsistent input
    NotFound,   ///< unknown instance, view or file
    Conflict,   ///< id collision, empty undo stack, no embedded instances
    Io,         ///< filesystem failure
    Parse,      ///< truncated or corrupt file
    Version,    ///< file written by a newer format revision
    Generation, ///< synthetic scene could not satisfy its constraints
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string &message)
        : std::runtime_error(message), mCode(code) {}

    ErrorCode code() const noexcept { return mCode; }

private:
    ErrorCode mCode;
};

[[noreturn]] inline void
fail(ErrorCode code, const std::string &message) {
    throw Error(code, message);
}

inline void
require(bool condition, ErrorCode code, const std::string &message) {
    if (!condition)
        fail(code, message);
}

} // namespace instsplat
