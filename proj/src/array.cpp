// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#include "distar/array.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace distar {

namespace {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (int e : s) {
        if (e < 0) throw shape_error("negative extent in shape " + shape_str(s));
        n *= static_cast<std::size_t>(e);
    }
    return n;
}

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

Array::Array(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Array::Array(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (shape_numel(shape_) != data_.size())
        throw shape_error("shape " + shape_str(shape_) + " does not hold " +
                          std::to_string(data_.size()) + " values");
}

Array Array::scalar(double v) { return Array(Shape{1}, std::vector<double>{v}); }

int Array::rows() const {
    if (shape_.size() <= 1) return 1;
    return shape_[0];
}

int Array::cols() const {
    if (shape_.empty()) return 0;
    if (shape_.size() == 1) return shape_[0];
    std::size_t c = 1;
    for (std::size_t i = 1; i < shape_.size(); ++i) c *= static_cast<std::size_t>(shape_[i]);
    return static_cast<int>(c);
}

double Array::item() const {
    if (data_.size() != 1)
        throw shape_error("item() on array of shape " + shape_str(shape_));
    return data_[0];
}

std::span<const double> Array::row(int i) const {
    const int m = cols();
    return std::span<const double>(data_.data() + static_cast<std::size_t>(i) * m, m);
}

bool Array::attached() const { return tape_ != nullptr && !epoch_.expired(); }

Tape* Array::tape() const { return attached() ? tape_ : nullptr; }

Array Array::detached() const { return Array(shape_, data_); }

bool Array::all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](double v) { return std::isfinite(v); });
}

// ---- Tape ----

Tape::Tape() : epoch_token_(std::make_shared<const std::uint64_t>(0)) {}

void Tape::bind(Array& a, int node) {
    a.tape_ = this;
    a.node_ = node;
    a.epoch_ = epoch_token_;
}

bool Tape::alive(const Array& a) const {
    return a.tape_ == this && a.node_ >= 0 && !a.epoch_.expired() &&
           a.epoch_.lock() == epoch_token_;
}

void Tape::watch(Array& a) {
    if (a.attached()) {
        if (a.tape_ == this) return;
        throw tape_error("watch: array is already live on another tape");
    }
    int id = record(a.size(), nullptr);
    bind(a, id);
}

int Tape::record(std::size_t out_size, BackFn back) {
    if (backward_done_)
        throw tape_error("record on a swept tape; reset() before reusing it");
    nodes_.push_back(NodeSlot{out_size, std::move(back)});
    return static_cast<int>(nodes_.size()) - 1;
}

std::span<double> Tape::grad_accum(int node) {
    auto& g = grads_[static_cast<std::size_t>(node)];
    if (g.empty()) g.assign(nodes_[static_cast<std::size_t>(node)].size, 0.0);
    return g;
}

void Tape::backward(const Array& loss) {
    if (!alive(loss))
        throw tape_error("backward: loss is not live on this tape (detached or stale)");
    if (loss.size() != 1)
        throw shape_error("backward: loss must be scalar, got " + shape_str(loss.shape()));
    if (backward_done_)
        throw tape_error("backward: tape already swept once; reset() first");
    backward_done_ = true;
    grads_.assign(nodes_.size(), {});
    grad_accum(loss.node_)[0] = 1.0;
    for (int i = loss.node_; i >= 0; --i) {
        auto& g = grads_[static_cast<std::size_t>(i)];
        if (g.empty()) continue;
        auto& fn = nodes_[static_cast<std::size_t>(i)].back;
        if (fn) fn(*this, g);
    }
}

std::span<const double> Tape::grad(const Array& a) {
    if (!alive(a)) throw tape_error("grad: array is not live on this tape");
    if (!backward_done_) throw tape_error("grad: no backward sweep on this tape yet");
    return grad_accum(a.node_);
}

double Tape::grad_l2norm_sq(const Array& a) {
    auto g = grad(a);
    double s = 0;
    for (double v : g) s += v * v;
    return s;
}

void Tape::reset() {
    nodes_.clear();
    grads_.clear();
    backward_done_ = false;
    ++epoch_;
    epoch_token_ = std::make_shared<const std::uint64_t>(epoch_);
}

// ---- op helpers ----

namespace {

Tape* common_tape(const Array& a, const Array& b, bool& live_a, bool& live_b) {
    live_a = a.attached();
    live_b = b.attached();
    Tape* t = live_a ? a.tape() : nullptr;
    if (live_b) {
        if (t != nullptr && t != b.tape())
            throw tape_error("operands are recorded on different tapes");
        t = b.tape();
    }
    return t;
}

Array finish(Shape shape, std::vector<double> data, Tape* tape, Tape::BackFn back) {
    Array out(std::move(shape), std::move(data));
    if (tape != nullptr) {
        int id = tape->record(out.size(), std::move(back));
        tape->bind(out, id);
    }
    return out;
}

// broadcast plan for binary elementwise ops
enum class BMode { full, scal, col, row };

struct BPlan {
    int n = 1, m = 1;  // output rows/cols
    BMode a = BMode::full, b = BMode::full;
    Shape out;
};

BPlan broadcast_plan(const Array& a, const Array& b, const char* opname) {
    BPlan p;
    if (a.shape() == b.shape()) {
        p.out = a.shape();
        p.n = a.rows();
        p.m = a.cols();
        return p;
    }
    if (a.size() == 1) {
        p.a = BMode::scal;
        p.out = b.shape();
        p.n = b.rows();
        p.m = b.cols();
        return p;
    }
    if (b.size() == 1) {
        p.b = BMode::scal;
        p.out = a.shape();
        p.n = a.rows();
        p.m = a.cols();
        return p;
    }
    auto fail = [&]() -> BPlan {
        throw shape_error(std::string(opname) + ": shapes do not conform: " +
                          shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    };
    if (a.ndim() > 2 || b.ndim() > 2) return fail();
    // column [n,1] or row [1,m] against [n,m]
    if (a.rows() == b.rows() && b.cols() == 1 && a.cols() > 1) {
        p.b = BMode::col;
    } else if (a.cols() == b.cols() && b.rows() == 1 && a.rows() > 1) {
        p.b = BMode::row;
    } else if (b.rows() == a.rows() && a.cols() == 1 && b.cols() > 1) {
        p.a = BMode::col;
        p.out = b.shape();
        p.n = b.rows();
        p.m = b.cols();
        return p;
    } else if (b.cols() == a.cols() && a.rows() == 1 && b.rows() > 1) {
        p.a = BMode::row;
        p.out = b.shape();
        p.n = b.rows();
        p.m = b.cols();
        return p;
    } else {
        return fail();
    }
    p.out = a.shape();
    p.n = a.rows();
    p.m = a.cols();
    return p;
}

inline std::size_t bindex(BMode mode, int i, int j, int m) {
    switch (mode) {
        case BMode::full: return static_cast<std::size_t>(i) * m + j;
        case BMode::scal: return 0;
        case BMode::col: return static_cast<std::size_t>(i);
        case BMode::row: return static_cast<std::size_t>(j);
    }
    return 0;
}

// accumulate g (laid out [n,m]) into a parent with broadcast mode
void reduce_into(std::span<double> dst, BMode mode, std::span<const double> g,
                 std::span<const double> factor, int n, int m) {
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * m + j;
            const double gv = factor.empty() ? g[k] : g[k] * factor[k];
            dst[bindex(mode, i, j, m)] += gv;
        }
    }
}

}  // namespace

// ---- binary elementwise ----

static Array addsub(const Array& a, const Array& b, double sgn, const char* name) {
    BPlan p = broadcast_plan(a, b, name);
    std::vector<double> out(static_cast<std::size_t>(p.n) * p.m);
    const double* pa = a.data();
    const double* pb = b.data();
    for (int i = 0; i < p.n; ++i)
        for (int j = 0; j < p.m; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * p.m + j;
            out[k] = pa[bindex(p.a, i, j, p.m)] + sgn * pb[bindex(p.b, i, j, p.m)];
        }
    bool la, lb;
    Tape* t = common_tape(a, b, la, lb);
    Tape::BackFn back;
    if (t) {
        int na = la ? a.node() : -1;
        int nb = lb ? b.node() : -1;
        back = [p, na, nb, sgn](Tape& tape, std::span<const double> g) {
            if (na >= 0) reduce_into(tape.grad_accum(na), p.a, g, {}, p.n, p.m);
            if (nb >= 0) {
                auto gb = tape.grad_accum(nb);
                for (int i = 0; i < p.n; ++i)
                    for (int j = 0; j < p.m; ++j)
                        gb[bindex(p.b, i, j, p.m)] +=
                            sgn * g[static_cast<std::size_t>(i) * p.m + j];
            }
        };
    }
    return finish(p.out, std::move(out), t, std::move(back));
}

Array add(const Array& a, const Array& b) { return addsub(a, b, 1.0, "add"); }
Array sub(const Array& a, const Array& b) { return addsub(a, b, -1.0, "sub"); }

Array mul(const Array& a, const Array& b) {
    BPlan p = broadcast_plan(a, b, "mul");
    std::vector<double> out(static_cast<std::size_t>(p.n) * p.m);
    const double* pa = a.data();
    const double* pb = b.data();
    for (int i = 0; i < p.n; ++i)
        for (int j = 0; j < p.m; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * p.m + j;
            out[k] = pa[bindex(p.a, i, j, p.m)] * pb[bindex(p.b, i, j, p.m)];
        }
    bool la, lb;
    Tape* t = common_tape(a, b, la, lb);
    Tape::BackFn back;
    if (t) {
        int na = la ? a.node() : -1;
        int nb = lb ? b.node() : -1;
        std::vector<double> av(a.values().begin(), a.values().end());
        std::vector<double> bv(b.values().begin(), b.values().end());
        back = [p, na, nb, av = std::move(av), bv = std::move(bv)](
                   Tape& tape, std::span<const double> g) {
            if (na >= 0) {
                auto ga = tape.grad_accum(na);
                for (int i = 0; i < p.n; ++i)
                    for (int j = 0; j < p.m; ++j) {
                        const std::size_t k = static_cast<std::size_t>(i) * p.m + j;
                        ga[bindex(p.a, i, j, p.m)] += g[k] * bv[bindex(p.b, i, j, p.m)];
                    }
            }
            if (nb >= 0) {
                auto gb = tape.grad_accum(nb);
                for (int i = 0; i < p.n; ++i)
                    for (int j = 0; j < p.m; ++j) {
                        const std::size_t k = static_cast<std::size_t>(i) * p.m + j;
                        gb[bindex(p.b, i, j, p.m)] += g[k] * av[bindex(p.a, i, j, p.m)];
                    }
            }
        };
    }
    return finish(p.out, std::move(out), t, std::move(back));
}

Array neg(const Array& a) { return scale(a, -1.0); }

Array scale(const Array& a, double s) {
    std::vector<double> out(a.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = a[k] * s;
    Tape* t = a.tape();
    Tape::BackFn back;
    if (t) {
        int na = a.node();
        back = [na, s](Tape& tape, std::span<const double> g) {
            auto ga = tape.grad_accum(na);
            for (std::size_t k = 0; k < g.size(); ++k) ga[k] += s * g[k];
        };
    }
    return finish(a.shape(), std::move(out), t, std::move(back));
}

Array add_scalar(const Array& a, double s) {
    std::vector<double> out(a.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = a[k] + s;
    Tape* t = a.tape();
    Tape::BackFn back;
    if (t) {
        int na = a.node();
        back = [na](Tape& tape, std::span<const double> g) {
            auto ga = tape.grad_accum(na);
            for (std::size_t k = 0; k < g.size(); ++k) ga[k] += g[k];
        };
    }
    return finish(a.shape(), std::move(out), t, std::move(back));
}

// ---- matmul / affine ----

static void check_2d(const Array& a, const char* opname) {
    if (a.ndim() > 2)
        throw shape_error(std::string(opname) + ": needs rank <= 2, got " +
                          shape_str(a.shape()));
}

Array matmul(const Array& a, const Array& b) {
    check_2d(a, "matmul");
    check_2d(b, "matmul");
    const int n = a.rows(), k = a.cols(), k2 = b.rows(), m = b.cols();
    if (k != k2)
        throw shape_error("matmul: inner extents differ: " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
    std::vector<double> out(static_cast<std::size_t>(n) * m, 0.0);
    const double* pa = a.data();
    const double* pb = b.data();
    for (int i = 0; i < n; ++i)
        for (int kk = 0; kk < k; ++kk) {
            const double av = pa[static_cast<std::size_t>(i) * k + kk];
            const double* brow = pb + static_cast<std::size_t>(kk) * m;
            double* orow = out.data() + static_cast<std::size_t>(i) * m;
            for (int j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
    bool la, lb;
    Tape* t = common_tape(a, b, la, lb);
    Tape::BackFn back;
    if (t) {
        int na = la ? a.node() : -1;
        int nb = lb ? b.node() : -1;
        std::vector<double> av(a.values().begin(), a.values().end());
        std::vector<double> bv(b.values().begin(), b.values().end());
        back = [n, k, m, na, nb, av = std::move(av), bv = std::move(bv)](
                   Tape& tape, std::span<const double> g) {
            if (na >= 0) {  // ga += g * b^T
                auto ga = tape.grad_accum(na);
                for (int i = 0; i < n; ++i)
                    for (int kk = 0; kk < k; ++kk) {
                        double s = 0;
                        const double* grow = g.data() + static_cast<std::size_t>(i) * m;
                        const double* brow = bv.data() + static_cast<std::size_t>(kk) * m;
                        for (int j = 0; j < m; ++j) s += grow[j] * brow[j];
                        ga[static_cast<std::size_t>(i) * k + kk] += s;
                    }
            }
            if (nb >= 0) {  // gb += a^T * g
                auto gb = tape.grad_accum(nb);
                for (int kk = 0; kk < k; ++kk)
                    for (int i = 0; i < n; ++i) {
                        const double av_ik = av[static_cast<std::size_t>(i) * k + kk];
                        const double* grow = g.data() + static_cast<std::size_t>(i) * m;
                        double* gbrow = gb.data() + static_cast<std::size_t>(kk) * m;
                        for (int j = 0; j < m; ++j) gbrow[j] += av_ik * grow[j];
                    }
            }
        };
    }
    return finish(Shape{n, m}, std::move(out), t, std::move(back));
}

static Array affine_impl(const Array& x, const Array& w, const Array& b,
                         bool grad_params) {
    check_2d(x, "affine");
    check_2d(w, "affine");
    const int n = x.rows(), k = x.cols(), m = w.cols();
    if (w.rows() != k || static_cast<int>(b.size()) != m)
        throw shape_error("affine: shapes do not conform: x" + shape_str(x.shape()) +
                          " w" + shape_str(w.shape()) + " b" + shape_str(b.shape()));
    std::vector<double> out(static_cast<std::size_t>(n) * m);
    const double* px = x.data();
    const double* pw = w.data();
    const double* pb = b.data();
    for (int i = 0; i < n; ++i) {
        double* orow = out.data() + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) orow[j] = pb[j];
        for (int kk = 0; kk < k; ++kk) {
            const double xv = px[static_cast<std::size_t>(i) * k + kk];
            const double* wrow = pw + static_cast<std::size_t>(kk) * m;
            for (int j = 0; j < m; ++j) orow[j] += xv * wrow[j];
        }
    }
    bool lx = x.attached();
    bool lw = grad_params && w.attached();
    bool lb = grad_params && b.attached();
    Tape* t = lx ? x.tape() : nullptr;
    if (lw) {
        if (t && t != w.tape()) throw tape_error("affine: operands on different tapes");
        t = w.tape();
    }
    if (lb) {
        if (t && t != b.tape()) throw tape_error("affine: operands on different tapes");
        t = b.tape();
    }
    Tape::BackFn back;
    if (t) {
        int nx = lx ? x.node() : -1;
        int nw = lw ? w.node() : -1;
        int nb = lb ? b.node() : -1;
        std::vector<double> xv;
        if (nw >= 0) xv.assign(x.values().begin(), x.values().end());
        std::vector<double> wv(w.values().begin(), w.values().end());
        back = [n, k, m, nx, nw, nb, xv = std::move(xv), wv = std::move(wv)](
                   Tape& tape, std::span<const double> g) {
            if (nx >= 0) {  // gx += g * w^T
                auto gx = tape.grad_accum(nx);
                for (int i = 0; i < n; ++i)
                    for (int kk = 0; kk < k; ++kk) {
                        double s = 0;
                        const double* grow = g.data() + static_cast<std::size_t>(i) * m;
                        const double* wrow = wv.data() + static_cast<std::size_t>(kk) * m;
                        for (int j = 0; j < m; ++j) s += grow[j] * wrow[j];
                        gx[static_cast<std::size_t>(i) * k + kk] += s;
                    }
            }
            if (nw >= 0) {  // gw += x^T * g
                auto gw = tape.grad_accum(nw);
                for (int kk = 0; kk < k; ++kk)
                    for (int i = 0; i < n; ++i) {
                        const double xv_ik = xv[static_cast<std::size_t>(i) * k + kk];
                        const double* grow = g.data() + static_cast<std::size_t>(i) * m;
                        double* gwrow = gw.data() + static_cast<std::size_t>(kk) * m;
                        for (int j = 0; j < m; ++j) gwrow[j] += xv_ik * grow[j];
                    }
            }
            if (nb >= 0) {
                auto gb = tape.grad_accum(nb);
                for (int i = 0; i < n; ++i) {
                    const double* grow = g.data() + static_cast<std::size_t>(i) * m;
                    for (int j = 0; j < m; ++j) gb[j] += grow[j];
                }
            }
        };
    }
    return finish(Shape{n, m}, std::move(out), t, std::move(back));
}

Array affine(const Array& x, const Array& w, const Array& b) {
    return affine_impl(x, w, b, true);
}

Array affine_frozen(const Array& x, const Array& w, const Array& b) {
    return affine_impl(x, w, b, false);
}

// ---- reductions ----

Array sum(const Array& a) {
    double s = std::accumulate(a.values().begin(), a.values().end(), 0.0);
    Tape* t = a.tape();
    Tape::BackFn back;
    if (t) {
        int na = a.node();
        std::size_t n = a.size();
        back = [na, n](Tape& tape, std::span<const double> g) {
            auto ga = tape.grad_accum(na);
            for (std::size_t k = 0; k < n; ++k) ga[k] += g[0];
        };
    }
    return finish(Shape{1}, {s}, t, std::move(back));
}

Array mean(const Array& a) {
    if (a.size() == 0) throw shape_error("mean of an empty array");
    double s = std::accumulate(a.values().begin(), a.values().end(), 0.0);
    const double inv = 1.0 / static_cast<double>(a.size());
    Tape* t = a.tape();
    Tape::BackFn back;
    if (t) {
        int na = a.node();
        std::size_t n = a.size();
        back = [na, n, inv](Tape& tape, std::span<const double> g) {
            auto ga = tape.grad_accum(na);
            for (std::size_t k = 0; k < n; ++k) ga[k] += g[0] * inv;
        };
    }
    return finish(Shape{1}, {s * inv}, t, std::move(back));
}

Array rowsum(const Array& a) {
    check_2d(a, "rowsum");
    const int n = a.rows(), m = a.cols();
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double s = 0;
        const double* arow = a.data() + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) s += arow[j];
        out[static_cast<std::size_t>(i)] = s;
    }
    Tape* t = a.tape();
    Tape::BackFn back;
    if (t) {
        int na = a.node();
        back = [na, n, m](Tape& tape, std::span<const double> g) {
            auto ga = tape.grad_accum(na);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j)
                    ga[static_cast<std::size_t>(i) * m + j] += g[static_cast<std::size_t>(i)];
        };
    }
    return finish(Shape{n, 1}, std::move(out), t, std::move(back));
}

Array dot(const Array& a, const Array& b) {
    if (a.shape() != b.shape())
        throw shape_error("dot: shapes differ: " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
    double s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    bool la, lb;
    Tape* t = common_tape(a, b, la, lb);
    Tape::BackFn back;
    if (t) {
        int na = la ? a.node() : -1;
        int nb = lb ? b.node() : -1;
        std::vector<double> av(a.values().begin(), a.values().end());
        std::vector<double> bv(b.values().begin(), b.values().end());
        back = [na, nb, av = std::move(av), bv = std::move(bv)](
                   Tape& tape, std::span<const double> g) {
            if (na >= 0) {
                auto ga = tape.grad_accum(na);
                for (std::size_t k = 0; k < bv.size(); ++k) ga[k] += g[0] * bv[k];
            }
            if (nb >= 0) {
                auto gb = tape.grad_accum(nb);
                for (std::size_t k = 0; k < av.size(); ++k) gb[k] += g[0] * av[k];
            }
        };
    }
    return finish(Shape{1}, {s}, t, std::move(back));
}

// ---- elementwise unary ----

template <class Fwd, class MakeBack>
static Array unary_op(const Array& a, Fwd fwd, MakeBack make_back) {
    std::vector<double> out(a.size());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = fwd(a[k]);
    Tape* t = a.tape();
    Tape::BackFn back;
    if (t) back = make_back(a, out);
    return finish(a.shape(), std::move(out), t, std::move(back));
}

Array square(const Array& a) {
    return unary_op(
        a, [](double v) { return v * v; },
        [](const Array& a, const std::vector<double>&) {
            int na = a.node();
            std::vector<double> av(a.values().begin(), a.values().end());
            return [na, av = std::move(av)](Tape& tape, std::span<const double> g) {
                auto ga = tape.grad_accum(na);
                for (std::size_t k = 0; k < av.size(); ++k) ga[k] += 2.0 * av[k] * g[k];
            };
        });
}

Array sqrt_op(const Array& a) {
    return unary_op(
        a, [](double v) { return std::sqrt(v); },
        [](const Array& a, const std::vector<double>& out) {
            int na = a.node();
            std::vector<double> ov = out;
            return [na, ov = std::move(ov)](Tape& tape, std::span<const double> g) {
                auto ga = tape.grad_accum(na);
                for (std::size_t k = 0; k < ov.size(); ++k) ga[k] += g[k] * 0.5 / ov[k];
            };
        });
}

Array exp_op(const Array& a) {
    return unary_op(
        a, [](double v) { return std::exp(v); },
        [](const Array& a, const std::vector<double>& out) {
            int na = a.node();
            std::vector<double> ov = out;
            return [na, ov = std::move(ov)](Tape& tape, std::span<const double> g) {
                auto ga = tape.grad_accum(na);
                for (std::size_t k = 0; k < ov.size(); ++k) ga[k] += g[k] * ov[k];
            };
        });
}

Array log_op(const Array& a) {
    return unary_op(
        a, [](double v) { return std::log(v); },
        [](const Array& a, const std::vector<double>&) {
            int na = a.node();
            std::vector<double> av(a.values().begin(), a.values().end());
            return [na, av = std::move(av)](Tape& tape, std::span<const double> g) {
                auto ga = tape.grad_accum(na);
                for (std::size_t k = 0; k < av.size(); ++k) ga[k] += g[k] / av[k];
            };
        });
}

static inline double softplus_val(double v) {
    return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

static inline double sigmoid_val(double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
}

Array softplus(const Array& a) {
    return unary_op(
        a, softplus_val,
        [](const Array& a, const std::vector<double>&) {
            int na = a.node();
            std::vector<double> av(a.values().begin(), a.values().end());
            return [na, av = std::move(av)](Tape& tape, std::span<const double> g) {
                auto ga = tape.grad_accum(na);
                for (std::size_t k = 0; k < av.size(); ++k)
                    ga[k] += g[k] * sigmoid_val(av[k]);
            };
        });
}

Array tanh_op(const Array& a) {
    return unary_op(
        a, [](double v) { return std::tanh(v); },
        [](const Array& a, const std::vector<double>& out) {
            int na = a.node();
            std::vector<double> ov = out;
            return [na, ov = std::move(ov)](Tape& tape, std::span<const double> g) {
                auto ga = tape.grad_accum(na);
                for (std::size_t k = 0; k < ov.size(); ++k)
                    ga[k] += g[k] * (1.0 - ov[k] * ov[k]);
            };
        });
}

// ---- structural ----

Array row_scale(const Array& x, std::span<const double> s) {
    check_2d(x, "row_scale");
    const int n = x.rows(), m = x.cols();
    if (static_cast<int>(s.size()) != n)
        throw shape_error("row_scale: factor length " + std::to_string(s.size()) +
                          " vs rows " + std::to_string(n));
    std::vector<double> out(x.size());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) {
            const std::size_t k = static_cast<std::size_t>(i) * m + j;
            out[k] = x[k] * s[static_cast<std::size_t>(i)];
        }
    Tape* t = x.tape();
    Tape::BackFn back;
    if (t) {
        int nx = x.node();
        std::vector<double> sv(s.begin(), s.end());
        back = [nx, n, m, sv = std::move(sv)](Tape& tape, std::span<const double> g) {
            auto gx = tape.grad_accum(nx);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < m; ++j) {
                    const std::size_t k = static_cast<std::size_t>(i) * m + j;
                    gx[k] += g[k] * sv[static_cast<std::size_t>(i)];
                }
        };
    }
    return finish(x.shape(), std::move(out), t, std::move(back));
}

Array concat_cols(const Array& a, const Array& b) {
    check_2d(a, "concat_cols");
    check_2d(b, "concat_cols");
    const int n = a.rows(), p = a.cols(), q = b.cols();
    if (b.rows() != n)
        throw shape_error("concat_cols: row counts differ: " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
    std::vector<double> out(static_cast<std::size_t>(n) * (p + q));
    for (int i = 0; i < n; ++i) {
        double* orow = out.data() + static_cast<std::size_t>(i) * (p + q);
        const double* arow = a.data() + static_cast<std::size_t>(i) * p;
        const double* brow = b.data() + static_cast<std::size_t>(i) * q;
        std::copy(arow, arow + p, orow);
        std::copy(brow, brow + q, orow + p);
    }
    bool la, lb;
    Tape* t = common_tape(a, b, la, lb);
    Tape::BackFn back;
    if (t) {
        int na = la ? a.node() : -1;
        int nb = lb ? b.node() : -1;
        back = [na, nb, n, p, q](Tape& tape, std::span<const double> g) {
            if (na >= 0) {
                auto ga = tape.grad_accum(na);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < p; ++j)
                        ga[static_cast<std::size_t>(i) * p + j] +=
                            g[static_cast<std::size_t>(i) * (p + q) + j];
            }
            if (nb >= 0) {
                auto gb = tape.grad_accum(nb);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < q; ++j)
                        gb[static_cast<std::size_t>(i) * q + j] +=
                            g[static_cast<std::size_t>(i) * (p + q) + p + j];
            }
        };
    }
    return finish(Shape{n, p + q}, std::move(out), t, std::move(back));
}

static Array take_rows_impl(const Array& table, std::span<const int> idx, bool grad_table) {
    check_2d(table, "take_rows");
    const int rows = table.rows(), e = table.cols();
    const int n = static_cast<int>(idx.size());
    std::vector<double> out(static_cast<std::size_t>(n) * e);
    for (int i = 0; i < n; ++i) {
        const int r = idx[static_cast<std::size_t>(i)];
        if (r < 0 || r >= rows)
            throw shape_error("take_rows: index " + std::to_string(r) +
                              " outside table with " + std::to_string(rows) + " rows");
        const double* trow = table.data() + static_cast<std::size_t>(r) * e;
        std::copy(trow, trow + e, out.data() + static_cast<std::size_t>(i) * e);
    }
    Tape* t = (grad_table && table.attached()) ? table.tape() : nullptr;
    Tape::BackFn back;
    if (t) {
        int nt = table.node();
        std::vector<int> iv(idx.begin(), idx.end());
        back = [nt, e, iv = std::move(iv)](Tape& tape, std::span<const double> g) {
            auto gt = tape.grad_accum(nt);
            for (std::size_t i = 0; i < iv.size(); ++i) {
                double* grow = gt.data() + static_cast<std::size_t>(iv[i]) * e;
                const double* src = g.data() + i * e;
                for (int j = 0; j < e; ++j) grow[j] += src[j];
            }
        };
    }
    return finish(Shape{n, e}, std::move(out), t, std::move(back));
}

Array take_rows(const Array& table, std::span<const int> idx) {
    return take_rows_impl(table, idx, true);
}

Array take_rows_frozen(const Array& table, std::span<const int> idx) {
    return take_rows_impl(table, idx, false);
}

Array detach(const Array& a) { return a.detached(); }

}  // namespace distar
