// SPDX-License-Identifier: Apache-2.0

#include "muonq/xlab/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "muonq/error.hpp"
#include "muonq/matkit/linalg.hpp"

namespace muonq::xlab {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error(ErrorCode::ShapeMismatch, "metric operands differ in shape");
    }
}

}  // namespace

double relative_error(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b);
    const double na = matkit::frobenius_norm(a);
    if (na == 0.0) {
        throw Error(ErrorCode::ZeroReference, "relative error against a zero reference");
    }
    return matkit::frobenius_norm(a - b) / na;
}

double cosine_similarity(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b);
    const double na = matkit::frobenius_norm(a);
    const double nb = matkit::frobenius_norm(b);
    if (na == 0.0 || nb == 0.0) {
        throw Error(ErrorCode::ZeroOperand, "cosine similarity with a zero operand");
    }
    return std::clamp(matkit::dot(a, b) / (na * nb), -1.0, 1.0);
}

}  // namespace muonq::xlab
