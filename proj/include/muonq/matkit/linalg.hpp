// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "muonq/matkit/matrix.hpp"

namespace muonq::matkit {

/// Newton-Schulz quintic coefficients (a, b, c) used by the Muon reference.
struct NsCoefficients {
    double a = 3.4445;
    double b = -4.7750;
    double c = 2.0315;
};

struct SvdResult {
    Matrix u;                    // m x r
    std::vector<double> sigma;   // r values, nonincreasing
    Matrix v;                    // n x r
    int sweeps = 0;
};

struct OrthResult {
    Matrix q;
    // Columns whose residual fell below tolerance and were replaced by a
    // seeded random direction.
    std::vector<std::size_t> repaired_columns;

    [[nodiscard]] bool rank_deficient() const noexcept {
        return !repaired_columns.empty();
    }
};

struct PowerIterResult {
    Matrix u;  // m x k, orthonormal columns
    Matrix s;  // k x n
    Matrix r;  // m x n residual
    std::vector<std::size_t> repaired_columns;
};

inline constexpr double kDegenerateNorm = 1e-12;
inline constexpr double kJacobiTolerance = 1e-10;
inline constexpr int kJacobiMaxSweeps = 30;

double frobenius_norm(const Matrix& m);

/// Thin SVD by one-sided Jacobi rotations on the smaller dimension.
/// Throws NonConvergence if the off-diagonal mass is still above tolerance
/// after `max_sweeps` sweeps.
SvdResult svd_thin(const Matrix& m, int max_sweeps = kJacobiMaxSweeps);

/// Orthogonal polar factor U V^T computed from the thin SVD.
Matrix polar_exact(const Matrix& m);

/// Orthogonal polar factor approximated by `iters` quintic Newton-Schulz steps
/// on the Frobenius-normalized input.
Matrix polar_ns(const Matrix& m, int iters = 5, NsCoefficients coeffs = {});

/// Householder QR orthonormalization with a nonnegative diagonal on R.
OrthResult orth(const Matrix& a, std::uint64_t seed = 0);

/// Divides each row by its L2 norm; near-zero rows become seeded random unit rows.
Matrix row_norm(const Matrix& s, std::uint64_t seed = 0);

/// One warm-started subspace-iteration step:
///   V = row_norm(S_prev), U = orth(M V^T), S = U^T M, R = M - U S.
PowerIterResult power_iter_update(const Matrix& m, const Matrix& s_prev, std::size_t k, std::uint64_t seed = 0);

/// Matrix of i.i.d. standard normal entries.
Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

}  // namespace muonq::matkit
