// SPDX-License-Identifier: Apache-2.0

#include "muonq/matkit/matrix.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <string>

#include "muonq/error.hpp"

namespace muonq::matkit {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) {
    return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

MutMap view(Matrix& m) {
    return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

void require_positive(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0) {
        throw Error(ErrorCode::InvalidArgument,
                    "matrix shape must be positive, got " + std::to_string(rows) + "x" + std::to_string(cols));
    }
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw Error(ErrorCode::ShapeMismatch, std::string(op) + ": " + std::to_string(a.rows()) + "x" +
                                                  std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                                  "x" + std::to_string(b.cols()));
    }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols) : m_rows(rows), m_cols(cols) {
    require_positive(rows, cols);
    m_data.assign(rows * cols, 0.0);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data) :
    m_rows(rows), m_cols(cols), m_data(std::move(data)) {
    require_positive(rows, cols);
    if (m_data.size() != rows * cols) {
        throw Error(ErrorCode::ShapeMismatch, "data length " + std::to_string(m_data.size()) +
                                                  " does not match " + std::to_string(rows) + "x" +
                                                  std::to_string(cols));
    }
    if (!all_finite()) {
        throw Error(ErrorCode::NonFinite, "matrix data contains NaN or Inf");
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    require_positive(r, c);
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) {
            throw Error(ErrorCode::ShapeMismatch, "ragged initializer list");
        }
        data.insert(data.end(), row.begin(), row.end());
    }
    *this = Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

Matrix Matrix::diagonal(std::span<const double> diag) {
    Matrix m(diag.size(), diag.size());
    for (std::size_t i = 0; i < diag.size(); ++i) {
        m(i, i) = diag[i];
    }
    return m;
}

Matrix Matrix::transpose() const {
    Matrix t(m_cols, m_rows);
    for (std::size_t r = 0; r < m_rows; ++r) {
        for (std::size_t c = 0; c < m_cols; ++c) {
            t.m_data[c * m_rows + r] = m_data[r * m_cols + c];
        }
    }
    return t;
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(m_data.begin(), m_data.end(), [](double v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& rhs) {
    require_same_shape(*this, rhs, "operator+=");
    for (std::size_t i = 0; i < m_data.size(); ++i) {
        m_data[i] += rhs.m_data[i];
    }
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& rhs) {
    require_same_shape(*this, rhs, "operator-=");
    for (std::size_t i = 0; i < m_data.size(); ++i) {
        m_data[i] -= rhs.m_data[i];
    }
    return *this;
}

Matrix& Matrix::operator*=(double s) noexcept {
    for (double& v : m_data) {
        v *= s;
    }
    return *this;
}

Matrix operator+(Matrix lhs, const Matrix& rhs) {
    lhs += rhs;
    return lhs;
}

Matrix operator-(Matrix lhs, const Matrix& rhs) {
    lhs -= rhs;
    return lhs;
}

Matrix operator*(double s, Matrix m) {
    m *= s;
    return m;
}

Matrix operator*(Matrix m, double s) {
    m *= s;
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw Error(ErrorCode::ShapeMismatch, "matmul inner dimensions differ");
    }
    Matrix c(a.rows(), b.cols());
    view(c).noalias() = view(a) * view(b);
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw Error(ErrorCode::ShapeMismatch, "matmul_tn row counts differ");
    }
    Matrix c(a.cols(), b.cols());
    view(c).noalias() = view(a).transpose() * view(b);
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw Error(ErrorCode::ShapeMismatch, "matmul_nt column counts differ");
    }
    Matrix c(a.rows(), b.rows());
    view(c).noalias() = view(a) * view(b).transpose();
    return c;
}

double dot(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "dot");
    double acc = 0.0;
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        acc += x[i] * y[i];
    }
    return acc;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "max_abs_diff");
    double worst = 0.0;
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
        worst = std::max(worst, std::abs(x[i] - y[i]));
    }
    return worst;
}

}  // namespace muonq::matkit
