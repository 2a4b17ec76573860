// SPDX-License-Identifier: Apache-2.0

#include "muonq/xlab/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "muonq/detail/seed.hpp"
#include "muonq/error.hpp"
#include "muonq/matkit/linalg.hpp"

namespace muonq::xlab {

using matkit::Matrix;

namespace {

Matrix tail_matrix(std::size_t rows, std::size_t cols, const SyntheticMomentumSpec& spec, std::mt19937_64& rng) {
    Matrix n(rows, cols);
    switch (spec.tail) {
        case Tail::Gaussian: {
            std::normal_distribution<double> d;
            for (double& x : n.data()) x = d(rng);
            break;
        }
        case Tail::Laplace: {
            std::exponential_distribution<double> e(1.0 / spec.tail_param);
            std::bernoulli_distribution coin(0.5);
            for (double& x : n.data()) {
                const double mag = e(rng);
                x = coin(rng) ? mag : -mag;
            }
            break;
        }
        case Tail::StudentT: {
            std::student_t_distribution<double> d(spec.tail_param);
            for (double& x : n.data()) x = d(rng);
            break;
        }
    }
    return n;
}

// Orthonormal directions whose entries inherit the configured tail, so the
// dominant part has a few large coordinates instead of Gaussian-spread ones.
Matrix orthonormal_columns(std::size_t rows, std::size_t cols, const SyntheticMomentumSpec& spec,
                           std::mt19937_64& rng) {
    return matkit::orth(tail_matrix(rows, cols, spec, rng)).q;
}

}  // namespace

std::string to_string(Tail tail) {
    switch (tail) {
        case Tail::Gaussian: return "gaussian";
        case Tail::Laplace: return "laplace";
        case Tail::StudentT: return "student-t";
    }
    return "unknown";
}

Tail parse_tail(const std::string& text) {
    if (text == "gaussian") return Tail::Gaussian;
    if (text == "laplace") return Tail::Laplace;
    if (text == "student-t" || text == "studentt") return Tail::StudentT;
    throw Error(ErrorCode::InvalidArgument, "unknown tail '" + text + "' (expected gaussian, laplace or student-t)");
}

void SyntheticMomentumSpec::validate() const {
    if (rows == 0 || cols == 0) {
        throw Error(ErrorCode::InvalidArgument, "synthetic momentum needs a nonempty shape");
    }
    if (dominant_rank > std::min(rows, cols)) {
        throw Error(ErrorCode::InvalidArgument, "dominant_rank exceeds min(rows, cols)");
    }
    if (!(spectrum_decay > 0.0 && spectrum_decay < 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "spectrum_decay must be in (0, 1)");
    }
    if (!(tail_param > 0.0)) {
        throw Error(ErrorCode::InvalidArgument, "tail parameter must be positive");
    }
    if (!(noise_level >= 0.0) || !std::isfinite(noise_level)) {
        throw Error(ErrorCode::InvalidArgument, "noise_level must be >= 0");
    }
    if (!(channel_spread >= 0.0 && channel_spread <= 4.0)) {
        throw Error(ErrorCode::InvalidArgument, "channel_spread must be in [0, 4]");
    }
    if (dominant_rank == 0 && noise_level == 0.0) {
        throw Error(ErrorCode::InvalidArgument, "synthetic momentum would be zero");
    }
}

nlohmann::json SyntheticMomentumSpec::to_json() const {
    return {{"rows", rows},
            {"cols", cols},
            {"dominant_rank", dominant_rank},
            {"spectrum_decay", spectrum_decay},
            {"tail", to_string(tail)},
            {"tail_param", tail_param},
            {"noise_level", noise_level},
            {"channel_spread", channel_spread},
            {"seed", seed}};
}

Matrix synthetic_momentum(const SyntheticMomentumSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(detail::derive_seed(spec.seed, {0x5717}));
    Matrix out = Matrix::zeros(spec.rows, spec.cols);
    if (spec.dominant_rank > 0) {
        const std::size_t r = spec.dominant_rank;
        Matrix u = orthonormal_columns(spec.rows, r, spec, rng);
        const Matrix v = orthonormal_columns(spec.cols, r, spec, rng);
        for (std::size_t j = 0; j < r; ++j) {
            const double sigma = std::pow(spec.spectrum_decay, static_cast<double>(j));
            for (std::size_t i = 0; i < spec.rows; ++i) u(i, j) *= sigma;
        }
        out = matkit::matmul_nt(u, v);
        out *= 1.0 / matkit::frobenius_norm(out);
    }
    if (spec.noise_level > 0.0) {
        Matrix n = tail_matrix(spec.rows, spec.cols, spec, rng);
        out += (spec.noise_level / matkit::frobenius_norm(n)) * n;
    }
    if (spec.channel_spread > 0.0) {
        std::exponential_distribution<double> e(1.0);
        std::bernoulli_distribution coin(0.5);
        auto log_scale = [&] {
            const double mag = e(rng);
            return spec.channel_spread * (coin(rng) ? mag : -mag);
        };
        std::vector<double> row_scale(spec.rows);
        std::vector<double> col_scale(spec.cols);
        for (double& v : row_scale) v = std::exp(log_scale());
        for (double& v : col_scale) v = std::exp(log_scale());
        for (std::size_t i = 0; i < spec.rows; ++i) {
            for (std::size_t j = 0; j < spec.cols; ++j) out(i, j) *= row_scale[i] * col_scale[j];
        }
    }
    out *= 1.0 / matkit::frobenius_norm(out);
    return out;
}

}  // namespace muonq::xlab
