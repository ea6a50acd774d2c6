// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "distar/common.hpp"

namespace distar {

// Small dense row-major matrix; the analytic oracles only ever see a handful
// of dimensions, so everything here is plain loops.
struct Matrix {
    int n = 0, m = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int rows, int cols, double fill = 0.0)
        : n(rows), m(cols), a(static_cast<std::size_t>(rows) * cols, fill) {}
    Matrix(int rows, int cols, std::vector<double> values);

    static Matrix identity(int d);
    static Matrix diag(std::span<const double> d);

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * m + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * m + j]; }

    Matrix transposed() const;
    bool symmetric(double tol = 1e-12) const;
};

Matrix matmul(const Matrix& x, const Matrix& y);
Matrix add(const Matrix& x, const Matrix& y);
Matrix scaled(const Matrix& x, double s);
void matvec(const Matrix& x, std::span<const double> v, std::span<double> out);
double trace(const Matrix& x);

// Lower Cholesky factor; throws numeric_error when the matrix is not SPD.
Matrix cholesky(const Matrix& spd);
// Solve L L^T x = b given the lower factor.
void chol_solve(const Matrix& lower, std::span<const double> b, std::span<double> x);
Matrix chol_inverse(const Matrix& lower);
double chol_logdet(const Matrix& lower);
// y = L z  (used to sample from N(mean, L L^T))
void lower_apply(const Matrix& lower, std::span<const double> z, std::span<double> y);

}  // namespace distar
