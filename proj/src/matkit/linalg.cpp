// SPDX-License-Identifier: Apache-2.0

#include "muonq/matkit/linalg.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "muonq/error.hpp"

namespace muonq::matkit {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;

VecMap vec(double* p, std::size_t n) {
    return {p, static_cast<Eigen::Index>(n)};
}

[[maybe_unused]] ConstVecMap vec(const double* p, std::size_t n) {
    return {p, static_cast<Eigen::Index>(n)};
}

// Jacobi on the rows of `b` (each row is one column of the tall input).
// On return the rows of `b` are mutually orthogonal and `vt` holds the
// accumulated rotations, one right singular vector per row.
int jacobi_rows(Matrix& b, Matrix& vt, int max_sweeps) {
    const std::size_t n = b.rows();
    const std::size_t len = b.cols();
    std::vector<double> norms(n);
    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
        for (std::size_t i = 0; i < n; ++i) {
            norms[i] = vec(b.row(i).data(), len).squaredNorm();
        }
        double worst = 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double alpha = norms[i];
                const double beta = norms[j];
                if (alpha == 0.0 || beta == 0.0) {
                    continue;
                }
                auto bi = vec(b.row(i).data(), len);
                auto bj = vec(b.row(j).data(), len);
                const double gamma = bi.dot(bj);
                const double ratio = std::abs(gamma) / std::sqrt(alpha * beta);
                worst = std::max(worst, ratio);
                if (ratio <= 1e-15) {
                    continue;
                }
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t p = 0; p < len; ++p) {
                    const double x = bi[p];
                    const double y = bj[p];
                    bi[p] = c * x - s * y;
                    bj[p] = s * x + c * y;
                }
                auto vi = vt.row(i);
                auto vj = vt.row(j);
                for (std::size_t p = 0; p < n; ++p) {
                    const double x = vi[p];
                    const double y = vj[p];
                    vi[p] = c * x - s * y;
                    vj[p] = s * x + c * y;
                }
                norms[i] = alpha - t * gamma;
                norms[j] = beta + t * gamma;
            }
        }
        if (worst < kJacobiTolerance) {
            return sweep;
        }
    }
    throw Error(ErrorCode::NonConvergence,
                "one-sided Jacobi did not reach tolerance within " + std::to_string(max_sweeps) + " sweeps");
}

// Thin SVD of a tall (rows >= cols) matrix.
SvdResult svd_tall(const Matrix& a, int max_sweeps) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    Matrix b = a.transpose();
    Matrix vt = Matrix::identity(n);
    const int sweeps = jacobi_rows(b, vt, max_sweeps);

    std::vector<double> norms(n);
    for (std::size_t j = 0; j < n; ++j) {
        norms[j] = vec(b.row(j).data(), m).norm();
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    SvdResult out{Matrix(m, n), std::vector<double>(n), Matrix(n, n), sweeps};
    const double cutoff = (norms.empty() ? 0.0 : norms[order.front()]) * 1e-14;
    std::vector<std::size_t> deficient;
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.sigma[j] = norms[src];
        for (std::size_t p = 0; p < n; ++p) {
            out.v(p, j) = vt(src, p);
        }
        if (norms[src] <= cutoff || norms[src] == 0.0) {
            deficient.push_back(j);
            continue;
        }
        for (std::size_t p = 0; p < m; ++p) {
            out.u(p, j) = b(src, p) / norms[src];
        }
    }

    // Complete U with orthonormal directions where sigma vanishes.
    std::mt19937_64 rng(0x5eedULL);
    std::normal_distribution<double> normal;
    for (const std::size_t j : deficient) {
        std::vector<double> g(m);
        double gnorm = 0.0;
        while (gnorm < 1e-8) {
            for (double& x : g) {
                x = normal(rng);
            }
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t c = 0; c < n; ++c) {
                    if (c == j) {
                        continue;
                    }
                    double proj = 0.0;
                    for (std::size_t p = 0; p < m; ++p) {
                        proj += out.u(p, c) * g[p];
                    }
                    for (std::size_t p = 0; p < m; ++p) {
                        g[p] -= proj * out.u(p, c);
                    }
                }
            }
            gnorm = vec(g.data(), m).norm();
        }
        for (std::size_t p = 0; p < m; ++p) {
            out.u(p, j) = g[p] / gnorm;
        }
    }
    return out;
}

Matrix random_unit_vector(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Matrix v(1, n);
    double norm = 0.0;
    while (norm < 1e-8) {
        for (double& x : v.data()) {
            x = normal(rng);
        }
        norm = frobenius_norm(v);
    }
    v *= 1.0 / norm;
    return v;
}

}  // namespace

double frobenius_norm(const Matrix& m) {
    double acc = 0.0;
    for (const double v : m.data()) {
        acc += v * v;
    }
    return std::sqrt(acc);
}

SvdResult svd_thin(const Matrix& m, int max_sweeps) {
    if (!m.all_finite()) {
        throw Error(ErrorCode::NonFinite, "svd_thin input contains NaN or Inf");
    }
    if (m.rows() >= m.cols()) {
        return svd_tall(m, max_sweeps);
    }
    SvdResult t = svd_tall(m.transpose(), max_sweeps);
    return SvdResult{std::move(t.v), std::move(t.sigma), std::move(t.u), t.sweeps};
}

Matrix polar_exact(const Matrix& m) {
    const double norm = frobenius_norm(m);
    if (norm == 0.0) {
        throw Error(ErrorCode::ZeroMatrix, "polar of a zero matrix is undefined");
    }
    const SvdResult svd = svd_thin(m * (1.0 / norm));
    return matmul_nt(svd.u, svd.v);
}

Matrix polar_ns(const Matrix& m, int iters, NsCoefficients coeffs) {
    const double norm = frobenius_norm(m);
    if (norm == 0.0) {
        throw Error(ErrorCode::ZeroMatrix, "polar of a zero matrix is undefined");
    }
    // Work on the orientation whose Gram matrix X X^T is the smaller one.
    const bool transpose = m.rows() > m.cols();
    Matrix start = transpose ? m.transpose() : m;
    start *= 1.0 / norm;

    const auto rows = static_cast<Eigen::Index>(start.rows());
    const auto cols = static_cast<Eigen::Index>(start.cols());
    RowMajor x = Eigen::Map<const RowMajor>(start.data().data(), rows, cols);
    RowMajor gram(rows, rows);
    RowMajor poly(rows, rows);
    RowMajor next(rows, cols);
    for (int it = 0; it < iters; ++it) {
        gram.noalias() = x * x.transpose();
        poly.noalias() = coeffs.c * (gram * gram);
        poly += coeffs.b * gram;
        next.noalias() = poly * x;
        next += coeffs.a * x;
        x.swap(next);
    }
    Matrix out(start.rows(), start.cols());
    Eigen::Map<RowMajor>(out.data().data(), rows, cols) = x;
    return transpose ? out.transpose() : out;
}

OrthResult orth(const Matrix& a, std::uint64_t seed) {
    const std::size_t m = a.rows();
    const std::size_t k = a.cols();
    if (k > m) {
        throw Error(ErrorCode::InvalidArgument,
                    "orth needs k <= m, got " + std::to_string(m) + "x" + std::to_string(k));
    }
    double max_col = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < m; ++r) {
            acc += a(r, c) * a(r, c);
        }
        max_col = std::max(max_col, std::sqrt(acc));
    }
    const double tol = kDegenerateNorm * std::max(1.0, max_col);

    Matrix w = a;
    std::vector<std::vector<double>> reflectors(k);
    std::vector<double> diag(k, 0.0);
    OrthResult out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;

    auto apply = [&](const std::vector<double>& v, std::size_t offset, auto&& at) {
        if (v.empty()) {
            return;
        }
        double proj = 0.0;
        for (std::size_t p = 0; p < v.size(); ++p) {
            proj += v[p] * at(offset + p);
        }
        for (std::size_t p = 0; p < v.size(); ++p) {
            at(offset + p) -= 2.0 * proj * v[p];
        }
    };

    for (std::size_t j = 0; j < k; ++j) {
        auto residual = [&] {
            double acc = 0.0;
            for (std::size_t r = j; r < m; ++r) {
                acc += w(r, j) * w(r, j);
            }
            return std::sqrt(acc);
        };
        double norm = residual();
        if (norm < tol) {
            out.repaired_columns.push_back(j);
            while (norm < 1e-8) {
                std::vector<double> g(m);
                for (double& x : g) {
                    x = normal(rng);
                }
                for (std::size_t i = 0; i < j; ++i) {
                    apply(reflectors[i], i, [&](std::size_t r) -> double& { return g[r]; });
                }
                for (std::size_t r = 0; r < m; ++r) {
                    w(r, j) = g[r];
                }
                norm = residual();
            }
        }
        const double x0 = w(j, j);
        const double alpha = -std::copysign(norm, x0);
        std::vector<double> v(m - j);
        for (std::size_t r = j; r < m; ++r) {
            v[r - j] = w(r, j);
        }
        v[0] -= alpha;
        const double vnorm = vec(v.data(), v.size()).norm();
        if (vnorm > 0.0) {
            for (double& x : v) {
                x /= vnorm;
            }
            for (std::size_t c = j + 1; c < k; ++c) {
                apply(v, j, [&](std::size_t r) -> double& { return w(r, c); });
            }
            reflectors[j] = std::move(v);
            diag[j] = alpha;
        } else {
            diag[j] = x0;
        }
    }

    Matrix q(m, k);
    for (std::size_t j = 0; j < k; ++j) {
        q(j, j) = 1.0;
    }
    for (std::size_t jj = k; jj-- > 0;) {
        for (std::size_t c = 0; c < k; ++c) {
            apply(reflectors[jj], jj, [&](std::size_t r) -> double& { return q(r, c); });
        }
    }
    for (std::size_t j = 0; j < k; ++j) {
        if (diag[j] < 0.0) {
            for (std::size_t r = 0; r < m; ++r) {
                q(r, j) = -q(r, j);
            }
        }
    }
    out.q = std::move(q);
    return out;
}

Matrix row_norm(const Matrix& s, std::uint64_t seed) {
    Matrix out = s;
    std::mt19937_64 rng(seed);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        const double norm = vec(row.data(), row.size()).norm();
        if (norm < kDegenerateNorm) {
            const Matrix unit = random_unit_vector(row.size(), rng);
            std::copy(unit.data().begin(), unit.data().end(), row.begin());
        } else {
            for (double& x : row) {
                x /= norm;
            }
        }
    }
    return out;
}

PowerIterResult power_iter_update(const Matrix& m, const Matrix& s_prev, std::size_t k, std::uint64_t seed) {
    if (s_prev.rows() != k || s_prev.cols() != m.cols()) {
        throw Error(ErrorCode::ShapeMismatch, "warm start must be " + std::to_string(k) + "x" +
                                                  std::to_string(m.cols()) + ", got " +
                                                  std::to_string(s_prev.rows()) + "x" +
                                                  std::to_string(s_prev.cols()));
    }
    if (k == 0 || k > std::min(m.rows(), m.cols())) {
        throw Error(ErrorCode::InvalidArgument, "rank k must be in [1, min(m, n)]");
    }
    const Matrix v = row_norm(s_prev, seed);
    OrthResult q = orth(matmul_nt(m, v), seed ^ 0x9e3779b97f4a7c15ULL);
    Matrix s = matmul_tn(q.q, m);
    Matrix r = m - matmul(q.q, s);
    return PowerIterResult{std::move(q.q), std::move(s), std::move(r), std::move(q.repaired_columns)};
}

Matrix gaussian_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    Matrix out(rows, cols);
    for (double& x : out.data()) {
        x = normal(rng);
    }
    return out;
}

}  // namespace muonq::matkit
