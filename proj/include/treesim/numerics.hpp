#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>

namespace treesim {

// Special functions used by the statistical harness and the QSD numerics.
// Incomplete-gamma routines follow the classic series / continued-fraction
// split; accuracy is ample for p-values and Poisson tails at desk scale.

namespace detail {

inline constexpr int kGammaMaxIter = 20000;
inline constexpr double kGammaEps = 1e-15;

// Lower regularized incomplete gamma via its power series (x < a+1).
inline double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < kGammaMaxIter; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * kGammaEps)
            return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
    throw std::runtime_error("gamma_p_series: no convergence");
}

// Upper regularized incomplete gamma via Lentz continued fraction (x >= a+1).
inline double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= kGammaMaxIter; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kGammaEps)
            return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
    }
    throw std::runtime_error("gamma_q_cf: no convergence");
}

} // namespace detail

// Lower regularized incomplete gamma P(a,x).
inline double gamma_p(double a, double x) {
    if (!(a > 0.0) || x < 0.0) throw std::invalid_argument("gamma_p: bad arguments");
    if (x == 0.0) return 0.0;
    return (x < a + 1.0) ? detail::gamma_p_series(a, x) : 1.0 - detail::gamma_q_cf(a, x);
}

// Upper regularized incomplete gamma Q(a,x) = 1 - P(a,x).
inline double gamma_q(double a, double x) {
    if (!(a > 0.0) || x < 0.0) throw std::invalid_argument("gamma_q: bad arguments");
    if (x == 0.0) return 1.0;
    return (x < a + 1.0) ? 1.0 - detail::gamma_p_series(a, x) : detail::gamma_q_cf(a, x);
}

// Upper-tail p-value of a chi-square statistic with df degrees of freedom.
inline double chi_square_pvalue(double statistic, double df) {
    if (df <= 0.0) return 1.0;
    if (statistic <= 0.0) return 1.0;
    return gamma_q(0.5 * df, 0.5 * statistic);
}

inline double log_binomial(long n, long k) {
    if (k < 0 || k > n) return -std::numeric_limits<double>::infinity();
    return std::lgamma(static_cast<double>(n) + 1.0) -
           std::lgamma(static_cast<double>(k) + 1.0) -
           std::lgamma(static_cast<double>(n - k) + 1.0);
}

inline double log_poisson_pmf(long k, double mean) {
    if (k < 0) return -std::numeric_limits<double>::infinity();
    if (mean == 0.0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    return static_cast<double>(k) * std::log(mean) - mean -
           std::lgamma(static_cast<double>(k) + 1.0);
}

inline double poisson_pmf(long k, double mean) { return std::exp(log_poisson_pmf(k, mean)); }

// P(Poi(mean) <= k) = Q(k+1, mean).
inline double poisson_cdf(long k, double mean) {
    if (k < 0) return 0.0;
    if (mean == 0.0) return 1.0;
    return gamma_q(static_cast<double>(k) + 1.0, mean);
}

inline double poisson_tail_above(long k, double mean) {
    if (mean == 0.0) return 0.0;
    if (k < 0) return 1.0;
    return gamma_p(static_cast<double>(k) + 1.0, mean);
}

// Hoeffding bound on P(Bin(n,p) <= j); 1 when j >= n*p.
inline double binomial_lower_tail_bound(long n, double p, long j) {
    const double mean = static_cast<double>(n) * p;
    const double gap = mean - static_cast<double>(j);
    if (gap <= 0.0) return 1.0;
    return std::exp(-2.0 * gap * gap / static_cast<double>(n));
}

// Asymptotic Kolmogorov-Smirnov survival function Q_KS(lambda).
inline double ks_survival(double lambda) {
    if (lambda < 1e-8) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 200; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += sign * term;
        if (term < 1e-16) break;
        sign = -sign;
    }
    return std::fmin(1.0, std::fmax(0.0, 2.0 * sum));
}

// Two-sample KS p-value for statistic d with sample sizes n1, n2.
inline double ks_two_sample_pvalue(double d, std::size_t n1, std::size_t n2) {
    const double ne = static_cast<double>(n1) * static_cast<double>(n2) /
                      static_cast<double>(n1 + n2);
    const double sq = std::sqrt(ne);
    return ks_survival((sq + 0.12 + 0.11 / sq) * d);
}

} // namespace treesim
