// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#include "distar/linalg.hpp"

#include <cmath>
#include <string>

namespace distar {

Matrix::Matrix(int rows, int cols, std::vector<double> values)
    : n(rows), m(cols), a(std::move(values)) {
    if (a.size() != static_cast<std::size_t>(rows) * cols)
        throw shape_error("matrix " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " does not hold " + std::to_string(a.size()) + " values");
}

Matrix Matrix::identity(int d) {
    Matrix out(d, d);
    for (int i = 0; i < d; ++i) out(i, i) = 1.0;
    return out;
}

Matrix Matrix::diag(std::span<const double> d) {
    Matrix out(static_cast<int>(d.size()), static_cast<int>(d.size()));
    for (std::size_t i = 0; i < d.size(); ++i) out(static_cast<int>(i), static_cast<int>(i)) = d[i];
    return out;
}

Matrix Matrix::transposed() const {
    Matrix out(m, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out(j, i) = (*this)(i, j);
    return out;
}

bool Matrix::symmetric(double tol) const {
    if (n != m) return false;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (std::abs((*this)(i, j) - (*this)(j, i)) > tol) return false;
    return true;
}

Matrix matmul(const Matrix& x, const Matrix& y) {
    if (x.m != y.n) throw shape_error("matrix product inner extents differ");
    Matrix out(x.n, y.m);
    for (int i = 0; i < x.n; ++i)
        for (int k = 0; k < x.m; ++k) {
            const double v = x(i, k);
            for (int j = 0; j < y.m; ++j) out(i, j) += v * y(k, j);
        }
    return out;
}

Matrix add(const Matrix& x, const Matrix& y) {
    if (x.n != y.n || x.m != y.m) throw shape_error("matrix sum extents differ");
    Matrix out = x;
    for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] += y.a[i];
    return out;
}

Matrix scaled(const Matrix& x, double s) {
    Matrix out = x;
    for (double& v : out.a) v *= s;
    return out;
}

void matvec(const Matrix& x, std::span<const double> v, std::span<double> out) {
    if (static_cast<int>(v.size()) != x.m || static_cast<int>(out.size()) != x.n)
        throw shape_error("matvec extents differ");
    for (int i = 0; i < x.n; ++i) {
        double s = 0;
        for (int j = 0; j < x.m; ++j) s += x(i, j) * v[j];
        out[i] = s;
    }
}

double trace(const Matrix& x) {
    double s = 0;
    for (int i = 0; i < x.n && i < x.m; ++i) s += x(i, i);
    return s;
}

Matrix cholesky(const Matrix& spd) {
    if (spd.n != spd.m) throw numeric_error("cholesky: matrix not square");
    const int d = spd.n;
    Matrix lower(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j <= i; ++j) {
            double s = spd(i, j);
            for (int k = 0; k < j; ++k) s -= lower(i, k) * lower(j, k);
            if (i == j) {
                if (s <= 0.0)
                    throw numeric_error("cholesky: matrix not positive definite (pivot " +
                                        std::to_string(s) + ")");
                lower(i, j) = std::sqrt(s);
            } else {
                lower(i, j) = s / lower(j, j);
            }
        }
    }
    return lower;
}

void chol_solve(const Matrix& lower, std::span<const double> b, std::span<double> x) {
    const int d = lower.n;
    std::vector<double> y(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) {
        double s = b[static_cast<std::size_t>(i)];
        for (int k = 0; k < i; ++k) s -= lower(i, k) * y[static_cast<std::size_t>(k)];
        y[static_cast<std::size_t>(i)] = s / lower(i, i);
    }
    for (int i = d - 1; i >= 0; --i) {
        double s = y[static_cast<std::size_t>(i)];
        for (int k = i + 1; k < d; ++k) s -= lower(k, i) * x[static_cast<std::size_t>(k)];
        x[static_cast<std::size_t>(i)] = s / lower(i, i);
    }
}

Matrix chol_inverse(const Matrix& lower) {
    const int d = lower.n;
    Matrix inv(d, d);
    std::vector<double> e(static_cast<std::size_t>(d), 0.0);
    std::vector<double> col(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
        e[static_cast<std::size_t>(j)] = 1.0;
        chol_solve(lower, e, col);
        e[static_cast<std::size_t>(j)] = 0.0;
        for (int i = 0; i < d; ++i) inv(i, j) = col[static_cast<std::size_t>(i)];
    }
    return inv;
}

double chol_logdet(const Matrix& lower) {
    double s = 0;
    for (int i = 0; i < lower.n; ++i) s += std::log(lower(i, i));
    return 2.0 * s;
}

void lower_apply(const Matrix& lower, std::span<const double> z, std::span<double> y) {
    const int d = lower.n;
    for (int i = 0; i < d; ++i) {
        double s = 0;
        for (int k = 0; k <= i; ++k) s += lower(i, k) * z[static_cast<std::size_t>(k)];
        y[static_cast<std::size_t>(i)] = s;
    }
}

}  // namespace distar
