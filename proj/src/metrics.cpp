// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#include "distar/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "distar/analytic.hpp"

namespace distar {

namespace {

double mean_pair_dist(const Array& a, const Array& b) {
    const int n = a.rows(), m = b.rows(), d = a.cols();
    double s = 0;
    for (int i = 0; i < n; ++i) {
        const double* ra = a.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < m; ++j) {
            const double* rb = b.data() + static_cast<std::size_t>(j) * d;
            double q = 0;
            for (int k = 0; k < d; ++k) {
                const double v = ra[k] - rb[k];
                q += v * v;
            }
            s += std::sqrt(q);
        }
    }
    return s / (static_cast<double>(n) * m);
}

}  // namespace

double energy_distance(const Array& x, const Array& y) {
    if (x.cols() != y.cols()) throw shape_error("energy_distance: dimension mismatch");
    if (x.rows() == 0 || y.rows() == 0) throw shape_error("energy_distance: empty sample");
    return 2.0 * mean_pair_dist(x, y) - mean_pair_dist(x, x) - mean_pair_dist(y, y);
}

double target_mode_fraction(const Array& samples, const GaussianMixture& ref,
                            int target_component) {
    const int n = samples.rows(), d = samples.cols();
    if (target_component < 0 || target_component >= ref.components())
        throw config_error("target_mode_fraction: component index out of range");
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        const double* row = samples.data() + static_cast<std::size_t>(i) * d;
        int best = 0;
        double best_d = INFINITY;
        for (int c = 0; c < ref.components(); ++c) {
            double q = 0;
            for (int k = 0; k < d; ++k) {
                const double v = row[k] - ref.means[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)];
                q += v * v;
            }
            if (q < best_d) {
                best_d = q;
                best = c;
            }
        }
        if (best == target_component) ++hits;
    }
    return static_cast<double>(hits) / n;
}

double implicit_reward_metric(const AnalyticReference& ref, const Array& x0,
                              std::span<const int> cls, const ForwardProcess& proc,
                              std::span<const double> time_grid, Rng& rng) {
    const int n = x0.rows(), d = x0.cols();
    const auto tw = trapezoid_weights(time_grid);
    double tw_sum = 0;
    for (double w : tw) tw_sum += w;
    std::vector<double> xt(static_cast<std::size_t>(d));
    double total = 0;
    for (std::size_t g = 0; g < time_grid.size(); ++g) {
        const double t = time_grid[g];
        const double at = proc.alpha(t), bt = proc.beta(t);
        double acc = 0;
        for (int i = 0; i < n; ++i) {
            const double* row = x0.data() + static_cast<std::size_t>(i) * d;
            for (int k = 0; k < d; ++k)
                xt[static_cast<std::size_t>(k)] = at * row[k] + bt * rng.normal();
            acc += ref.log_density(xt, t, cls[static_cast<std::size_t>(i)]) -
                   ref.log_density(xt, t, -1);
        }
        total += tw[g] * acc / n;
    }
    return total / tw_sum;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct MetricsWriter::Impl {
    std::ofstream os;
};

const std::vector<std::string>& MetricsWriter::columns() {
    static const std::vector<std::string> cols{
        "iter",        "loss_dsm",   "loss_reg",
        "loss_reward", "loss_cfg",   "reward_mean",
        "target_mode_fraction", "energy_distance", "grad_norm_gen",
        "grad_norm_assistant"};
    return cols;
}

MetricsWriter::MetricsWriter(const std::string& path, bool append) : impl_(new Impl) {
    impl_->os.open(path, append ? std::ios::app : std::ios::out);
    if (!impl_->os) {
        delete impl_;
        throw config_error("metrics: cannot write '" + path + "'");
    }
    if (!append) {
        const auto& cols = columns();
        for (std::size_t i = 0; i < cols.size(); ++i)
            impl_->os << (i ? "," : "") << cols[i];
        impl_->os << "\n";
    }
}

MetricsWriter::~MetricsWriter() { delete impl_; }

void MetricsWriter::write_row(long iter, const std::vector<double>& values) {
    if (values.size() + 1 != columns().size())
        throw shape_error("metrics: expected " + std::to_string(columns().size() - 1) +
                          " values per row");
    impl_->os << iter;
    for (double v : values) impl_->os << "," << format_double(v);
    impl_->os << "\n";
}

void MetricsWriter::flush() { impl_->os.flush(); }

std::vector<MetricsRow> read_metrics_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error("metrics: cannot read '" + path + "'");
    std::string line;
    if (!std::getline(is, line)) throw config_error("metrics: empty file " + path);
    std::vector<MetricsRow> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        MetricsRow row;
        std::istringstream ls(line);
        std::string cell;
        bool first = true;
        while (std::getline(ls, cell, ',')) {
            if (first) {
                row.iter = std::stol(cell);
                first = false;
            } else {
                row.values.push_back(std::stod(cell));
            }
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace distar
