// SPDX-License-Identifier: Apache-2.0

// Reference Muon recursion written straight from the update equations, with
// the polar factor taken from Eigen's SVD. Used to cross-check the optimizer.

#pragma once

#include <Eigen/Dense>

#include <vector>

#include "test_support.hpp"

namespace muonq::testing {

using Dense = Eigen::MatrixXd;

inline Dense to_dense(const Matrix& m) {
    Dense d(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) {
            d(r, c) = m(r, c);
        }
    }
    return d;
}

inline Matrix from_dense(const Dense& d) {
    Matrix m(d.rows(), d.cols());
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
        for (Eigen::Index c = 0; c < d.cols(); ++c) {
            m(r, c) = d(r, c);
        }
    }
    return m;
}

inline Dense reference_polar(const Dense& m) {
    Eigen::JacobiSVD<Dense> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    return svd.matrixU() * svd.matrixV().transpose();
}

struct ReferenceMuon {
    double lr = 0.001;
    double beta = 0.95;
    double wd = 0.1;
    bool normalize = true;
};

/// W after each step of the (optionally normalized) momentum recursion.
inline std::vector<Matrix> reference_trajectory(const Matrix& w0, const std::vector<Matrix>& grads,
                                                const ReferenceMuon& cfg) {
    Dense w = to_dense(w0);
    Dense m = Dense::Zero(w.rows(), w.cols());
    std::vector<Matrix> out;
    for (const Matrix& g_in : grads) {
        const Dense g = to_dense(g_in);
        if (cfg.normalize) {
            m = cfg.beta * m + g / g.norm();
            m /= m.norm();
        } else {
            m = cfg.beta * m + g;
        }
        w = (1.0 - cfg.lr * cfg.wd) * w - cfg.lr * reference_polar(m);
        out.push_back(from_dense(w));
    }
    return out;
}

}  // namespace muonq::testing
