// SPDX-License-Identifier: Apache-2.0

#include "muonq/error.hpp"

namespace muonq {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::ZeroMatrix: return "ZeroMatrix";
        case ErrorCode::NonConvergence: return "NonConvergence";
        case ErrorCode::ZeroReference: return "ZeroReference";
        case ErrorCode::ZeroOperand: return "ZeroOperand";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::TruncatedFile: return "TruncatedFile";
        case ErrorCode::CorruptFile: return "CorruptFile";
        case ErrorCode::Config: return "Config";
    }
    return "Unknown";
}

}  // namespace muonq
