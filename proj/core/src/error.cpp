// Copyright Contributors to the instsplat project
// SPDX-License-Identifier: Apache-2.0
//
#include <instsplat/error.hpp>

namespace instsplat {

std::string_view
to_string(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::Validation: return "validation";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::Conflict: return "conflict";
    case ErrorCode::Io: return "io";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Version: return "version";
    case ErrorCode::Generation: return "generation";
    }
    return "unknown";
}

} // namespace instsplat
