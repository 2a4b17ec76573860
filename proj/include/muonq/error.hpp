// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace muonq {

enum class ErrorCode {
    InvalidArgument,
    ShapeMismatch,
    NonFinite,
    ZeroMatrix,
    NonConvergence,
    ZeroReference,
    ZeroOperand,
    IoFailure,
    BadMagic,
    VersionMismatch,
    TruncatedFile,
    CorruptFile,
    Config,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) :
        std::runtime_error(std::string(to_string(code)) + ": " + what), m_code(code) {}

    [[nodiscard]] ErrorCode code() const noexcept {
        return m_code;
    }

private:
    ErrorCode m_code;
};

}  // namespace muonq
