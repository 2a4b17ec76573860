// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "muonq/matkit/matrix.hpp"

namespace muonq::xlab {

using matkit::Matrix;

/// ||a - b||_F / ||a||_F. Throws ZeroReference when a is zero.
double relative_error(const Matrix& a, const Matrix& b);

/// <a, b>_F / (||a||_F ||b||_F), clamped to [-1, 1]. Throws ZeroOperand when
/// either side is zero.
double cosine_similarity(const Matrix& a, const Matrix& b);

}  // namespace muonq::xlab
