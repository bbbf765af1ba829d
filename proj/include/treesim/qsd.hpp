#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "treesim/discrete_tree.hpp"
#include "treesim/generators.hpp"
#include "treesim/numerics.hpp"
#include "treesim/rtree.hpp"

namespace treesim {

// Substochastic transition matrix of the binomially thinned pure-death chain
// killed at 0: P(k,j) = C(k,j) p^j (1-p)^(k-j) for 1 <= j <= k. Rows are
// stored up to the truncation size K; entries for larger k are computed on
// demand from the same log-domain formula.
class DeathKernel {
public:
    DeathKernel(double p, int K) : p_(p), K_(K) {
        if (!(p > 0.0) || p >= 1.0) throw std::invalid_argument("DeathKernel: p must be in (0,1)");
        if (K < 1) throw std::invalid_argument("DeathKernel: K must be >= 1");
        entries_.assign(static_cast<std::size_t>(K) * K, 0.0);
        for (long k = 1; k <= K; ++k) {
            double row_max = 0.0;
            for (long j = 1; j <= k; ++j) {
                const double v = compute(k, j);
                entries_[index(k, j)] = v;
                row_max = std::fmax(row_max, v);
            }
            if (row_max == 0.0)
                throw std::runtime_error("DeathKernel: row " + std::to_string(k) +
                                         " underflowed to zero across its whole band");
        }
    }

    double p() const { return p_; }
    int truncation() const { return K_; }

    // P(k,j); k beyond the stored truncation is computed on the fly.
    double at(long k, long j) const {
        if (j < 1 || k < 1 || j > k) return 0.0;
        if (k <= K_) return entries_[index(k, j)];
        return compute(k, j);
    }

    // Exact row sum 1 - (1-p)^k.
    double row_sum(long k) const { return -std::expm1(static_cast<double>(k) * std::log1p(-p_)); }

private:
    std::size_t index(long k, long j) const {
        return static_cast<std::size_t>(k - 1) * K_ + static_cast<std::size_t>(j - 1);
    }

    double compute(long k, long j) const {
        return std::exp(log_binomial(k, j) + static_cast<double>(j) * std::log(p_) +
                        static_cast<double>(k - j) * std::log1p(-p_));
    }

    double p_;
    int K_;
    std::vector<double> entries_;
};

// Mixture-of-Poisson law eta_k = d^{-1} int P(Poi(x)=k) Lambda(dx), k >= 1,
// held as a vector on {1..K_eff} plus the exact mass beyond K_eff. For combs
// with large atoms the tail is genuinely heavy, so eta + tail_mass is the
// probability vector, and residual checks account for the split explicitly.
struct MixtureQsd {
    std::vector<double> eta;   // eta[k-1] = eta_k, k = 1..K_eff
    double q = 0.0;            // claimed eigenvalue
    double d = 0.0;            // normalizer, int (1-e^{-x}) Lambda(dx)
    double tail_mass = 0.0;    // mixture mass beyond K_eff
    LambdaSpec spec;

    int k_eff() const { return static_cast<int>(eta.size()); }
    double at(long k) const {
        return (k >= 1 && k <= k_eff()) ? eta[static_cast<std::size_t>(k - 1)] : 0.0;
    }
};

// Builds the mixture QSD for a discrete Lambda (atoms or comb). claimed_q
// defaults to the comb's q; explicit values support negative controls.
inline MixtureQsd mixture_qsd(const LambdaSpec& spec, int k_eff, double claimed_q = -1.0) {
    if (!spec.is_discrete())
        throw std::invalid_argument("mixture_qsd: Lambda must be discrete (atoms or comb)");
    if (k_eff < 1) throw std::invalid_argument("mixture_qsd: K_eff must be >= 1");
    double q = claimed_q;
    if (q < 0.0) {
        if (spec.kind() != LambdaSpec::Kind::Comb)
            throw std::invalid_argument("mixture_qsd: claimed q required for atom specs");
        q = spec.comb_q();
    }
    MixtureQsd out;
    out.q = q;
    out.d = spec.d_value();
    out.spec = spec;
    out.eta.assign(static_cast<std::size_t>(k_eff), 0.0);
    for (const auto& a : spec.atom_list()) {
        const double lw = std::log(a.weight);
        for (long k = 1; k <= k_eff; ++k) {
            const double term = std::exp(lw + log_poisson_pmf(k, a.x));
            out.eta[static_cast<std::size_t>(k - 1)] += term;
        }
        out.tail_mass += a.weight * poisson_tail_above(k_eff, a.x);
    }
    for (auto& e : out.eta) e /= out.d;
    out.tail_mass /= out.d;
    return out;
}

// Smallest K_eff (doubling from the window) whose dropped tail provably leaks
// less than `tol` into the residual window {1..window} under Bin(.,p)
// thinning.
inline int recommended_k_eff(const LambdaSpec& spec, int window, double p, double tol = 1e-12) {
    int k = window;
    for (int iter = 0; iter < 40; ++iter) {
        double leak = 0.0;
        const double d = spec.d_value();
        for (const auto& a : spec.atom_list())
            leak += a.weight / d * poisson_tail_above(k, a.x) *
                    binomial_lower_tail_bound(k + 1, p, window);
        if (leak < tol) return k;
        k *= 2;
    }
    throw std::runtime_error("recommended_k_eff: no feasible truncation found");
}

struct QsdResidual {
    double l1 = 0.0;          // || eta P - q eta ||_1 over the window
    double leak_bound = 0.0;  // bound on the window error from the dropped eta tail
    int window = 0;
};

// l1 residual of eta P = q eta over j in {1..window} (default: the kernel's
// truncated support). eta rows beyond the kernel truncation use the on-demand
// kernel entries; the unrepresented eta tail contributes only through the
// reported leak bound.
inline QsdResidual qsd_residual(const MixtureQsd& eta, const DeathKernel& kernel,
                                int window = 0) {
    if (eta.spec.kind() == LambdaSpec::Kind::Comb && kernel.p() != eta.spec.comb_p())
        throw std::invalid_argument("qsd_residual: kernel p differs from the comb's p");
    const int J = window > 0 ? window : kernel.truncation();
    if (J > kernel.truncation())
        throw std::invalid_argument("qsd_residual: window exceeds kernel truncation");
    if (J > eta.k_eff())
        throw std::invalid_argument("qsd_residual: dimension mismatch (eta shorter than window)");
    QsdResidual res;
    res.window = J;
    for (long j = 1; j <= J; ++j) {
        double lhs = 0.0;
        for (long k = j; k <= eta.k_eff(); ++k) lhs += eta.at(k) * kernel.at(k, j);
        res.l1 += std::fabs(lhs - eta.q * eta.at(j));
    }
    res.leak_bound =
        eta.tail_mass * binomial_lower_tail_bound(eta.k_eff() + 1, kernel.p(), J);
    return res;
}

// Per-spine-vertex subtree sampler of Corollary-style concatenation laws:
// Geo(c) independent copies with c = 1/(1+d), each copy drawn by size-biasing
// x with weight (1-e^{-x}), sampling sigma_x, rescaling by x and discretizing
// conditioned on being non-root. Rejections count toward `attempt_cap`.
inline DiscreteTree sample_spine_subtree(const LambdaSpec& spec, const DecorationKernel& kernel,
                                         Rng& rng, long attempt_cap = 10000000L) {
    const double d = spec.d_value();
    const double c = 1.0 / (1.0 + d);
    const long copies = rng.geometric(c);
    std::vector<DiscreteTree> parts;
    parts.reserve(static_cast<std::size_t>(copies));
    for (long g = 0; g < copies; ++g) {
        const double x = spec.sample_size_tilted(rng);
        const FiniteRTree scaled = scale_by(kernel.sample(x), x);
        const double mass = scaled.total_mass();
        long n = 0;
        long attempts = 0;
        while (true) {
            if (++attempts > attempt_cap)
                throw std::runtime_error("sample_spine_subtree: attempt cap exceeded");
            n = rng.poisson(mass);
            if (n >= 1) break;
        }
        std::vector<PointRef> v0, v1;
        for (long i = 0; i < n; ++i) {
            const PointRef pt = sample_point(scaled, rng);
            (pt.origin == 0 ? v0 : v1).push_back(pt);
        }
        parts.push_back(discretize_given(scaled, v0, v1).tree);
    }
    return concatenate(parts);
}

} // namespace treesim
