// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace muonq::matkit {

/// Dense row-major matrix of doubles. Shapes are always at least 1x1 and
/// entries are checked finite whenever external data is adopted.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix zeros(std::size_t rows, std::size_t cols) {
        return Matrix(rows, cols);
    }
    static Matrix identity(std::size_t n);
    static Matrix diagonal(std::span<const double> diag);

    [[nodiscard]] std::size_t rows() const noexcept {
        return m_rows;
    }
    [[nodiscard]] std::size_t cols() const noexcept {
        return m_cols;
    }
    [[nodiscard]] std::size_t size() const noexcept {
        return m_data.size();
    }
    [[nodiscard]] bool empty() const noexcept {
        return m_data.empty();
    }

    double& operator()(std::size_t r, std::size_t c) noexcept {
        return m_data[r * m_cols + c];
    }
    double operator()(std::size_t r, std::size_t c) const noexcept {
        return m_data[r * m_cols + c];
    }

    [[nodiscard]] std::span<double> data() noexcept {
        return m_data;
    }
    [[nodiscard]] std::span<const double> data() const noexcept {
        return m_data;
    }
    [[nodiscard]] std::span<double> row(std::size_t r) noexcept {
        return {m_data.data() + r * m_cols, m_cols};
    }
    [[nodiscard]] std::span<const double> row(std::size_t r) const noexcept {
        return {m_data.data() + r * m_cols, m_cols};
    }

    [[nodiscard]] Matrix transpose() const;
    [[nodiscard]] bool all_finite() const noexcept;

    Matrix& operator+=(const Matrix& rhs);
    Matrix& operator-=(const Matrix& rhs);
    Matrix& operator*=(double s) noexcept;

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t m_rows = 0;
    std::size_t m_cols = 0;
    std::vector<double> m_data;
};

Matrix operator+(Matrix lhs, const Matrix& rhs);
Matrix operator-(Matrix lhs, const Matrix& rhs);
Matrix operator*(double s, Matrix m);
Matrix operator*(Matrix m, double s);

/// C = A * B.
Matrix matmul(const Matrix& a, const Matrix& b);
/// C = A^T * B.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// C = A * B^T.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// Frobenius inner product <A, B>.
double dot(const Matrix& a, const Matrix& b);

/// Largest |entry - entry'| between two same-shaped matrices.
double max_abs_diff(const Matrix& a, const Matrix& b);

}  // namespace muonq::matkit
