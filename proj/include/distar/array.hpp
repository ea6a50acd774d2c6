// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "distar/common.hpp"

namespace distar {

class Tape;

using Shape = std::vector<int>;

// Dense row-major array of doubles, optionally recorded on a differentiation
// tape. A detached Array (no live tape node) is a plain value and never
// receives gradient.
class Array {
  public:
    Array() = default;
    explicit Array(Shape shape, double fill = 0.0);
    Array(Shape shape, std::vector<double> values);
    static Array scalar(double v);

    const Shape& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    std::size_t size() const { return data_.size(); }
    // 2-d view: 1-d arrays count as a single row
    int rows() const;
    int cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<const double> values() const { return data_; }
    std::span<double> values_mut() { return data_; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double item() const;  // value of a one-element array

    std::span<const double> row(int i) const;

    bool attached() const;
    int node() const { return node_; }
    Tape* tape() const;
    Array detached() const;  // value copy, no tape node

    bool all_finite() const;

  private:
    friend class Tape;
    Shape shape_;
    std::vector<double> data_;
    Tape* tape_ = nullptr;
    int node_ = -1;
    std::weak_ptr<const std::uint64_t> epoch_;
};

std::string shape_str(const Shape& s);

// Reverse-mode tape. Nodes are appended in evaluation order (inputs precede
// outputs) and the backward pass walks them once in reverse. Rebuilt (reset)
// per training step; resetting detaches every Array recorded on it.
class Tape {
  public:
    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Register a as a leaf of this tape (in place). No-op when already live here.
    void watch(Array& a);

    // Reverse sweep from a scalar loss. Errors: non-scalar loss, loss not live
    // on this tape, second call without reset.
    void backward(const Array& loss);

    // Gradient of the last backward w.r.t. a node this tape recorded; zeros if
    // the node was never reached.
    std::span<const double> grad(const Array& a);
    double grad_l2norm_sq(const Array& a);

    void reset();
    int num_nodes() const { return static_cast<int>(nodes_.size()); }
    bool backward_done() const { return backward_done_; }

    // --- internals used by the op layer ---
    using BackFn = std::function<void(Tape&, std::span<const double>)>;
    int record(std::size_t out_size, BackFn back);
    std::span<double> grad_accum(int node);  // allocate-on-first-use buffer
    bool alive(const Array& a) const;        // attached to this tape, current epoch
    void bind(Array& a, int node);

  private:
    struct NodeSlot {
        std::size_t size;
        BackFn back;
    };
    std::vector<NodeSlot> nodes_;
    std::vector<std::vector<double>> grads_;
    std::shared_ptr<const std::uint64_t> epoch_token_;
    std::uint64_t epoch_ = 0;
    bool backward_done_ = false;
};

// ---- differentiable ops ----
//
// Binary elementwise ops conform when the shapes are identical, one operand is
// a single element (scalar broadcast), or one operand is a column [n,1] / row
// [1,m] against an [n,m] matrix. Nothing else broadcasts.

Array add(const Array& a, const Array& b);
Array sub(const Array& a, const Array& b);
Array mul(const Array& a, const Array& b);
Array neg(const Array& a);
Array scale(const Array& a, double s);
Array add_scalar(const Array& a, double s);

Array matmul(const Array& a, const Array& b);              // [n,k]x[k,m]
Array affine(const Array& x, const Array& w, const Array& b);  // x*w + b
// affine with the parameters used as plain values: gradient flows through x
// only. This is the stop-gradient evaluation of a frozen network / fixed
// linear score field.
Array affine_frozen(const Array& x, const Array& w, const Array& b);

Array sum(const Array& a);     // -> [1]
Array mean(const Array& a);    // -> [1]
Array rowsum(const Array& a);  // [n,m] -> [n,1]
Array dot(const Array& a, const Array& b);  // sum(a*b) -> [1]

Array square(const Array& a);
Array sqrt_op(const Array& a);
Array exp_op(const Array& a);
Array log_op(const Array& a);
Array softplus(const Array& a);  // the smooth activation
Array tanh_op(const Array& a);

// out[i,:] = s[i] * x[i,:]; s is a fixed per-row factor (not differentiated)
Array row_scale(const Array& x, std::span<const double> s);
Array concat_cols(const Array& a, const Array& b);
// rows of a fixed or learned table selected per sample; gradient scatters into
// the table rows when the table is attached
Array take_rows(const Array& table, std::span<const int> idx);
Array take_rows_frozen(const Array& table, std::span<const int> idx);

Array detach(const Array& a);

}  // namespace distar
