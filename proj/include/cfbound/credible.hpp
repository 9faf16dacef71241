#pragma once

#include "cfbound/emcc.hpp"

#include <vector>

namespace cfbound {

/// Probability that k draws from a Beta(alpha, beta) on [a - x, b + y] all fall
/// in [a, b], where L = b - a: [I_{(L+x)/T} - I_{x/T}]^k with T = L + x + y.
double kernel(double x, double y, double L, double alpha, double beta, int k);
/// log of kernel(); -inf when the probability is zero.
double log_kernel(double x, double y, double L, double alpha, double beta, int k);

struct CoverageQuery {
    double lower = 0.0;  // a
    double upper = 0.0;  // b
    int k = 0;
    double delta = 0.0;

    double width() const { return upper - lower; }
    /// Relative error delta / (2 L).
    double epsilon() const { return delta / (2.0 * width()); }
    /// Slack a + (1 - b) available to the unknown endpoints.
    double slack() const { return lower + (1.0 - upper); }
    void validate() const;
};

CoverageQuery coverage_query(const RunSet& rs, double delta);

struct BetaFit {
    double alpha = 1.0;
    double beta = 1.0;
    double support_lower = 0.0;
    double support_upper = 1.0;
    double log_likelihood = 0.0;
    int iterations = 0;
};

/// Relative quadrature tolerance of coverage_beta.
inline constexpr double kQuadratureTolerance = 1e-10;

/// P(a - a* <= delta/2, b* - b <= delta/2 | rho) under a uniform prior on the
/// endpoint gaps: ratio of kernel integrals over [0, delta/2]^2 (clipped to the
/// prior triangle) and over the triangle x + y <= a + (1 - b).
double coverage_beta(const CoverageQuery& q, const BetaFit& fit, double rel_tol = kQuadratureTolerance);

/// Closed form of coverage_beta for alpha = beta = 1. Requires k >= 3,
/// 0 < delta < L and L < 1 - 1e-12.
double coverage_uniform(const CoverageQuery& q);

/// Probability that the query is identifiable when all k runs coincide:
/// 1 + 9 / 3^k - 8 / 2^k.
double identifiability_probability(int k);

/// Beta MLE of the values rescaled to (0, 1) over [lo, hi]; values at the
/// endpoints are clamped inward by 1e-9. Needs at least 3 values, not all equal.
BetaFit fit_beta(const std::vector<double>& values, double lo, double hi);
/// Fit over the observed support [a, b] of the run set.
BetaFit fit_beta(const RunSet& rs);

enum class Decision { stop, go_on };

struct StoppingResult {
    Decision decision = Decision::go_on;
    double probability = 0.0;
    bool identifiable_route = false;
    std::optional<BetaFit> fit;
};

/// Stop when the coverage probability (or, when every run returned the same
/// value, the identifiability probability) reaches `target`.
StoppingResult stopping_rule(const RunSet& rs, double delta, double target);

const char* to_string(Decision d);

}  // namespace cfbound
