// Copyright (c) 2026 the distar authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "distar/distance.hpp"
#include "distar/linalg.hpp"
#include "distar/process.hpp"
#include "distar/rng.hpp"

namespace distar {

struct Gaussian {
    std::vector<double> mean;
    Matrix cov;
};

// Closed-form reference distribution. Covariances must be SPD; weights form a
// simplex. Components may carry a class label for conditional setups.
struct GaussianMixture {
    std::vector<double> weights;
    std::vector<std::vector<double>> means;
    std::vector<Matrix> covs;
    std::vector<int> labels;  // empty, or one label per component

    int dim() const { return means.empty() ? 0 : static_cast<int>(means[0].size()); }
    int components() const { return static_cast<int>(weights.size()); }
    void validate() const;

    static GaussianMixture single(Gaussian g);
    // renormalized sub-mixture of the components carrying the label
    GaussianMixture conditioned_on(int label) const;
    std::vector<int> distinct_labels() const;
};

// Cached evaluation form (inverses, Cholesky factors, log-normalizers).
class PreparedMixture {
  public:
    PreparedMixture() = default;
    explicit PreparedMixture(const GaussianMixture& g);

    int dim() const { return dim_; }
    double log_density(std::span<const double> x) const;
    void score(std::span<const double> x, std::span<double> out) const;
    void sample(Rng& rng, std::span<double> out) const;

  private:
    struct Comp {
        std::vector<double> mean;
        Matrix inv;
        Matrix lower;
        double logw = 0;
        double lognorm = 0;  // -d/2 log(2 pi) - 1/2 logdet
    };
    int dim_ = 0;
    std::vector<Comp> comps_;
    std::vector<double> cum_weights_;
};

// score of N(mean, cov) at x: -cov^{-1} (x - mean)
void gaussian_score(std::span<const double> mean, const Matrix& cov,
                    std::span<const double> x, std::span<double> out);
double gaussian_log_density(std::span<const double> mean, const Matrix& cov,
                            std::span<const double> x);
// responsibility-weighted mixture score, log-sum-exp stabilized
void gmm_score(const GaussianMixture& g, std::span<const double> x, std::span<double> out);
double gmm_log_density(const GaussianMixture& g, std::span<const double> x);

// marginal at time t: component k -> N(alpha mean_k, alpha^2 cov_k + beta^2 I)
GaussianMixture diffused_gmm(const GaussianMixture& g, const ForwardProcess& p, double t);

// One-step linear generator x = A z + b with latent z ~ N(0, sigma_init^2 I);
// its pushforward N(b, sigma_init^2 A A^T) is exact, which is what makes the
// theorem checks closed-form.
struct AffineGenerator {
    Matrix a;  // d x k
    std::vector<double> b;
    double sigma_init = 2.5;

    int data_dim() const { return a.n; }
    int latent_dim() const { return a.m; }
    void apply(std::span<const double> z, std::span<double> out) const;
    void sample(Rng& rng, std::span<double> out) const;
    Gaussian pushforward() const;

    static AffineGenerator isotropic(std::vector<double> b, double sigma_init,
                                     int latent_dim = 0);
};

// diffused pushforward of an affine generator at time t
Gaussian diffused_pushforward(const AffineGenerator& g, const ForwardProcess& p, double t);

// ---- time-integral score divergence ----

struct DivergenceResult {
    double value = 0;
    bool exact = false;        // closed-form path taken
    bool mc_fallback = false;  // exact requested but unsupported for these inputs
};

// Latent/noise draws shared across paired evaluations (common random numbers).
// z and eps are standard normal; antithetic pairs (+v, -v) cancel the odd
// moments that otherwise dominate the gradient noise of equal-covariance
// test cases.
struct PushforwardDraws {
    int n = 0;
    Matrix z;    // n x k
    Matrix eps;  // n x d
};
PushforwardDraws draw_pushforward(int n, int latent_dim, int data_dim, Rng& rng,
                                  bool antithetic = false);

std::vector<double> trapezoid_weights(std::span<const double> grid);

// Monte Carlo estimate of integral_t w(t) E_{x_t ~ p_sample,t}[ d(s_{p_eval,t}(x_t)
// - s_{q,t}(x_t)) ] dt over the grid. Freezing p_sample while varying p_eval is
// exactly the sg[theta] sampling distribution of the gradient identity.
double divergence_mc_frozen(const AffineGenerator& p_eval, const AffineGenerator& p_sample,
                            const GaussianMixture& q, const ForwardProcess& proc,
                            const DistanceFunction& dist, const WeightingFunction& w,
                            std::span<const double> time_grid, const PushforwardDraws& draws);

// closed form for squared L2 and a single Gaussian q:
// E_{x~N(m,S)} ||M x + v||^2 = tr(M S M^T) + ||M m + v||^2 applied to the
// difference of the two linear score fields at each grid time.
double divergence_exact_sql2(const AffineGenerator& p_eval, const AffineGenerator& p_sample,
                             const Gaussian& q, const ForwardProcess& proc,
                             const WeightingFunction& w, std::span<const double> time_grid);

DivergenceResult divergence_oracle(const AffineGenerator& p, const GaussianMixture& q,
                                   const ForwardProcess& proc, const DistanceFunction& dist,
                                   const WeightingFunction& w,
                                   std::span<const double> time_grid, int n_mc, Rng& rng,
                                   bool prefer_exact = true);

// ---- GMM spec files ----
// Line-oriented structured text: a header with `dim =` / `components =`,
// then one [component] block per component holding `weight`, `mean`,
// `cov_row` (dim rows) and an optional `label`. '#' starts a comment.
GaussianMixture parse_gmm(std::istream& is);
GaussianMixture load_gmm(const std::string& path);
std::string format_gmm(const GaussianMixture& g);

}  // namespace distar
