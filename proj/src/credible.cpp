#include "cfbound/credible.hpp"

#include "cfbound/errors.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <type_traits>

namespace cfbound {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_kernel_args(double x, double y, double L, double alpha, double beta, int k) {
    if (!(L > 0.0) || !(x >= 0.0) || !(y >= 0.0) || !(alpha > 0.0) || !(beta > 0.0) || k < 1) {
        throw DomainError("kernel: need L > 0, x, y >= 0, alpha, beta > 0, k >= 1");
    }
}

}  // namespace

double log_kernel(double x, double y, double L, double alpha, double beta, int k) {
    check_kernel_args(x, y, L, alpha, beta, k);
    const double T = L + x + y;
    // Mass outside [a, b]: below a and above b.
    const double below = x > 0.0 ? boost::math::ibeta(alpha, beta, x / T) : 0.0;
    const double above = y > 0.0 ? boost::math::ibeta(beta, alpha, y / T) : 0.0;
    const double out = below + above;
    if (!std::isfinite(out)) throw NumericError("kernel: non-finite incomplete beta");
    if (out >= 1.0) return kNegInf;
    return static_cast<double>(k) * std::log1p(-out);
}

double kernel(double x, double y, double L, double alpha, double beta, int k) {
    return std::exp(log_kernel(x, y, L, alpha, beta, k));
}

void CoverageQuery::validate() const {
    if (k < 1) throw DomainError("coverage: k must be positive");
    if (!(lower >= 0.0) || !(upper <= 1.0) || !(lower <= upper)) throw DomainError("coverage: need 0 <= a <= b <= 1");
    const double L = width();
    if (!(L > 0.0)) throw DomainError("coverage: L = 0, use the identifiability probability");
    if (!(delta > 0.0) || !(delta < L)) throw DomainError("coverage: need 0 < delta < L");
}

CoverageQuery coverage_query(const RunSet& rs, double delta) {
    CoverageQuery q{rs.lower, rs.upper, static_cast<int>(rs.k()), delta};
    q.validate();
    return q;
}

namespace {

constexpr double kHeadTolerance = 1e-13;

// Integral over [0, bound] of a non-negative function that behaves like
// c0 + c1 x^e near 0 (e is the Beta shape on that side, often well below 1).
// Panels double above `scale` until the tail is negligible. On the head
// [0, scale] we substitute x = scale u^p with p e >= 1, which leaves only mild
// singularities in u, then split [0, h] into [0, h/4] and [h/4, h] while a
// single Gauss panel over [0, h] disagrees with the two parts.
template <int N, class F>
double graded_integral(F&& f, double bound, double scale, double e) {
    if (bound <= 0.0) return 0.0;
    using rule = boost::math::quadrature::gauss<double, N>;
    scale = std::min(scale, bound);
    double total = 0.0;
    for (double lo = scale; lo < bound;) {
        const double hi = std::min(2.0 * lo, bound);
        const double part = rule::integrate(f, lo, hi);
        total += part;
        if (part <= 1e-17 * total) break;
        lo = hi;
    }
    const double p = std::clamp(1.0 / e, 1.0, 40.0);
    auto head = [&](double u) {
        if (u <= 0.0) return p == 1.0 ? scale * f(0.0) : 0.0;
        const double up = std::pow(u, p - 1.0);
        return scale * p * up * f(scale * up * u);
    };
    double hi = 1.0;
    double whole = rule::integrate(head, 0.0, hi);
    for (int depth = 0; depth < 400; ++depth) {
        const double cut = 0.25 * hi;
        const double left = rule::integrate(head, 0.0, cut);
        const double right = rule::integrate(head, cut, hi);
        if (std::abs(left + right - whole) <= kHeadTolerance * (total + left + right)) return total + left + right;
        total += right;
        whole = left;
        hi = cut;
    }
    return total + whole;
}

// Integral over y in [0, ymax] and x in [0, min(h, M - y)]. The inner upper limit
// has a kink at y = M - h, and when ymax = M the inner range closes at the
// corner, where the inner integral vanishes like (M - y)^(1 + alpha).
template <int N>
double region_integral(double L, const BetaFit& fit, int k, double ymax, double h, double M) {
    const double scale = L / static_cast<double>(k);
    auto f = [&](double x, double y) { return std::exp(log_kernel(x, y, L, fit.alpha, fit.beta, k)); };
    auto g = [&](double y) {
        const double xmax = std::min(h, M - y);
        return graded_integral<N>([&](double x) { return f(x, y); }, xmax, scale, fit.alpha);
    };
    const double kink = M - h;
    double split = ymax;
    if (kink > 0.0 && kink < ymax) split = kink;
    else if (ymax >= M) split = 0.5 * ymax;
    double total = graded_integral<N>(g, split, scale, fit.beta);
    if (split < ymax) {
        const double w = ymax - split;
        total += graded_integral<N>([&](double t) { return g(ymax - t); }, w, w, 1.0 + fit.alpha);
    }
    return total;
}

}  // namespace

double coverage_beta(const CoverageQuery& q, const BetaFit& fit, double rel_tol) {
    q.validate();
    const double L = q.width();
    const double M = q.slack();
    if (!(M > 0.0)) return 1.0;  // a = 0 and b = 1: nothing left to cover
    const double h = std::min(q.delta / 2.0, M);

    auto ratio = [&](auto order) {
        constexpr int N = decltype(order)::value;
        const double num = region_integral<N>(L, fit, q.k, h, h, M);
        const double den = region_integral<N>(L, fit, q.k, M, M, M);
        if (!(den > 0.0) || !std::isfinite(num) || !std::isfinite(den)) {
            throw NumericError("coverage: degenerate quadrature");
        }
        return num / den;
    };
    const double coarse = ratio(std::integral_constant<int, 15>{});
    const double fine = ratio(std::integral_constant<int, 30>{});
    if (std::abs(fine - coarse) > std::max(rel_tol * std::abs(fine), 1e-14)) {
        const double finer = ratio(std::integral_constant<int, 60>{});
        if (std::abs(finer - fine) > std::max(1e3 * rel_tol * std::abs(finer), 1e-12)) {
            throw NumericError("coverage: quadrature did not converge");
        }
        return std::clamp(finer, 0.0, 1.0);
    }
    return std::clamp(fine, 0.0, 1.0);
}

double coverage_uniform(const CoverageQuery& q) {
    q.validate();
    if (q.k <= 2) throw DomainError("coverage_uniform: k must be at least 3");
    const double L = q.width();
    if (L >= 1.0 - 1e-12) throw DomainError("coverage_uniform: L too close to 1");
    const double eps = q.epsilon();
    const double km2 = static_cast<double>(q.k - 2);
    // 1 + (1+2e)^(2-k) - 2 (1+e)^(2-k), without cancellation for small e.
    const double num = std::expm1(-km2 * std::log1p(2.0 * eps)) - 2.0 * std::expm1(-km2 * std::log1p(eps));
    const double lk = std::exp(km2 * std::log(L));
    const double den = (1.0 - lk) - km2 * (1.0 - L) * lk;
    if (!(den > 0.0)) throw NumericError("coverage_uniform: non-positive normaliser");
    return std::clamp(num / den, 0.0, 1.0);
}

double identifiability_probability(int k) {
    if (k < 1) throw DomainError("identifiability_probability: k must be positive");
    const double kd = static_cast<double>(k);
    return std::clamp(1.0 + 9.0 * std::pow(3.0, -kd) - 8.0 * std::pow(2.0, -kd), 0.0, 1.0);
}

BetaFit fit_beta(const std::vector<double>& values, double lo, double hi) {
    if (values.size() < 3) throw DomainError("fit_beta: need at least 3 values");
    if (!(hi > lo)) throw DomainError("fit_beta: empty support");
    constexpr double clamp_eps = 1e-9;
    double s1 = 0.0;  // sum log z
    double s2 = 0.0;  // sum log(1 - z)
    double m = 0.0;
    double m2 = 0.0;
    bool all_equal = true;
    for (double v : values) {
        if (v != values.front()) all_equal = false;
        const double z = std::clamp((v - lo) / (hi - lo), clamp_eps, 1.0 - clamp_eps);
        s1 += std::log(z);
        s2 += std::log1p(-z);
        m += z;
        m2 += z * z;
    }
    if (all_equal) throw DomainError("fit_beta: all values equal");
    const double n = static_cast<double>(values.size());
    m /= n;
    const double var = std::max(m2 / n - m * m, 1e-12);
    // Moment matching start.
    double common = m * (1.0 - m) / var - 1.0;
    if (!(common > 0.0)) common = 1.0;
    double la = std::log(std::max(m * common, 1e-3));
    double lb = std::log(std::max((1.0 - m) * common, 1e-3));

    auto loglik = [&](double a, double b) {
        return (a - 1.0) * s1 + (b - 1.0) * s2 - n * (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
    };

    BetaFit fit;
    fit.support_lower = lo;
    fit.support_upper = hi;
    double cur = loglik(std::exp(la), std::exp(lb));
    int it = 0;
    for (; it < 200; ++it) {
        const double a = std::exp(la);
        const double b = std::exp(lb);
        const double dab = boost::math::digamma(a + b);
        const double tab = boost::math::trigamma(a + b);
        // Gradient and Hessian in (log a, log b).
        const double ga = s1 - n * (boost::math::digamma(a) - dab);
        const double gb = s2 - n * (boost::math::digamma(b) - dab);
        const double haa = -n * (boost::math::trigamma(a) - tab);
        const double hbb = -n * (boost::math::trigamma(b) - tab);
        const double hab = n * tab;
        const double g1 = a * ga;
        const double g2 = b * gb;
        const double h11 = a * a * haa + g1;
        const double h22 = b * b * hbb + g2;
        const double h12 = a * b * hab;
        double d1 = 0.0;
        double d2 = 0.0;
        const double det = h11 * h22 - h12 * h12;
        if (h11 < 0.0 && det > 0.0) {
            d1 = -(h22 * g1 - h12 * g2) / det;
            d2 = -(h11 * g2 - h12 * g1) / det;
        } else {
            // Not concave here: gradient ascent step.
            const double gn = std::hypot(g1, g2);
            d1 = g1 / std::max(gn, 1.0);
            d2 = g2 / std::max(gn, 1.0);
        }
        const double cap = 2.0;
        const double dn = std::hypot(d1, d2);
        if (dn > cap) {
            d1 *= cap / dn;
            d2 *= cap / dn;
        }
        double step = 1.0;
        double next = cur;
        for (int ls = 0; ls < 60; ++ls) {
            next = loglik(std::exp(la + step * d1), std::exp(lb + step * d2));
            if (std::isfinite(next) && next >= cur - 1e-12 * std::abs(cur)) break;
            step *= 0.5;
        }
        la += step * d1;
        lb += step * d2;
        const bool small = std::abs(step * d1) < 1e-12 && std::abs(step * d2) < 1e-12;
        cur = next;
        if (small || std::hypot(g1, g2) < 1e-9 * n) break;
        if (std::abs(la) > 50.0 || std::abs(lb) > 50.0) throw NumericError("fit_beta: parameters diverge");
    }
    fit.alpha = std::exp(la);
    fit.beta = std::exp(lb);
    fit.log_likelihood = cur;
    fit.iterations = it;
    if (!std::isfinite(fit.alpha) || !std::isfinite(fit.beta)) throw NumericError("fit_beta: non-finite estimate");
    return fit;
}

BetaFit fit_beta(const RunSet& rs) { return fit_beta(rs.values, rs.lower, rs.upper); }

StoppingResult stopping_rule(const RunSet& rs, double delta, double target) {
    StoppingResult r;
    if (rs.k() == 0) throw DomainError("stopping_rule: empty run set");
    if (rs.upper == rs.lower) {
        r.identifiable_route = true;
        r.probability = identifiability_probability(static_cast<int>(rs.k()));
    } else if (rs.k() < 3) {
        r.probability = 0.0;
    } else {
        const auto fit = fit_beta(rs);
        r.fit = fit;
        r.probability = coverage_beta(coverage_query(rs, delta), fit);
    }
    r.decision = r.probability >= target ? Decision::stop : Decision::go_on;
    return r;
}

const char* to_string(Decision d) { return d == Decision::stop ? "stop" : "continue"; }

}  // namespace cfbound
