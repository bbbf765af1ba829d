#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "treesim/one_ended_rtree.hpp"
#include "treesim/one_ended_tree.hpp"
#include "treesim/rng.hpp"

namespace treesim {

struct LambdaAtom {
    double x = 0.0;
    double weight = 0.0;
};

// Jump-size measure Lambda on (0, infinity), scale covariant in the sense
// Lambda(A) = q Lambda(pA).
//
//  - power(alpha, eps, xmax): density alpha * x^(-1-alpha) on [eps, xmax];
//    satisfies the covariance with q = p^alpha. The cutoff makes the total
//    rate finite; every report pins it.
//  - comb(x0, p, q, n_min, n_max): atoms x_n = x0 * p^(-n) with weight q^n.
//    Satisfies the covariance exactly on interior atoms, which is what makes
//    non-statistical assertions possible.
//  - atoms: an explicit finite atom list (no covariance implied).
class LambdaSpec {
public:
    enum class Kind { Power, Comb, Atoms };

    static LambdaSpec power(double alpha, double eps_cutoff, double x_max) {
        if (!(alpha > 0.0) || alpha >= 1.0)
            throw std::invalid_argument("LambdaSpec: alpha must be in (0,1)");
        if (!(eps_cutoff > 0.0) || !(eps_cutoff < x_max))
            throw std::invalid_argument("LambdaSpec: need 0 < eps_cutoff < x_max");
        LambdaSpec s;
        s.kind_ = Kind::Power;
        s.alpha_ = alpha;
        s.eps_ = eps_cutoff;
        s.xmax_ = x_max;
        return s;
    }

    static LambdaSpec comb(double x0, double p, double q, int n_min, int n_max) {
        if (!(x0 > 0.0)) throw std::invalid_argument("LambdaSpec: x0 must be > 0");
        if (!(p > 0.0) || p >= 1.0 || !(q > 0.0) || q >= 1.0)
            throw std::invalid_argument("LambdaSpec: p, q must lie in (0,1)");
        if (!(q > p)) throw std::invalid_argument("LambdaSpec: comb requires q > p");
        if (n_min > n_max) throw std::invalid_argument("LambdaSpec: n_min > n_max");
        LambdaSpec s;
        s.kind_ = Kind::Comb;
        s.x0_ = x0;
        s.p_ = p;
        s.q_ = q;
        s.n_min_ = n_min;
        s.n_max_ = n_max;
        for (int n = n_min; n <= n_max; ++n)
            s.atoms_.push_back(LambdaAtom{x0 * std::pow(p, -n), std::pow(q, n)});
        return s;
    }

    static LambdaSpec atoms(std::vector<LambdaAtom> list) {
        if (list.empty()) throw std::invalid_argument("LambdaSpec: empty atom list");
        for (const auto& a : list)
            if (!(a.x > 0.0) || !(a.weight > 0.0))
                throw std::invalid_argument("LambdaSpec: atoms need x > 0 and weight > 0");
        LambdaSpec s;
        s.kind_ = Kind::Atoms;
        s.atoms_ = std::move(list);
        return s;
    }

    Kind kind() const { return kind_; }
    bool is_discrete() const { return kind_ != Kind::Power; }
    const std::vector<LambdaAtom>& atom_list() const { return atoms_; }
    double comb_p() const { return p_; }
    double comb_q() const { return q_; }
    double comb_x0() const { return x0_; }
    int comb_n_min() const { return n_min_; }
    int comb_n_max() const { return n_max_; }
    double power_alpha() const { return alpha_; }
    double power_eps() const { return eps_; }
    double power_xmax() const { return xmax_; }

    // Lambda(support).
    double total_rate() const {
        if (kind_ == Kind::Power)
            return std::pow(eps_, -alpha_) - std::pow(xmax_, -alpha_);
        double s = 0.0;
        for (const auto& a : atoms_) s += a.weight;
        return s;
    }

    // d = integral of (1 - e^{-x}) Lambda(dx).
    double d_value() const {
        if (kind_ == Kind::Power) {
            // composite Simpson in log scale; the integrand is smooth there
            const int n = 1 << 15;
            const double lo = std::log(eps_), hi = std::log(xmax_);
            const double h = (hi - lo) / n;
            auto f = [&](double u) {
                const double x = std::exp(u);
                return -std::expm1(-x) * alpha_ * std::pow(x, -alpha_);   // times x from du
            };
            double sum = f(lo) + f(hi);
            for (int i = 1; i < n; ++i) sum += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
            return sum * h / 3.0;
        }
        double s = 0.0;
        for (const auto& a : atoms_) s += a.weight * (-std::expm1(-a.x));
        return s;
    }

    // x ~ Lambda / Lambda(support).
    double sample_size(Rng& rng) const {
        if (kind_ == Kind::Power) {
            const double lo = std::pow(eps_, -alpha_);
            const double hi = std::pow(xmax_, -alpha_);
            return std::pow(lo - rng.uniform() * (lo - hi), -1.0 / alpha_);
        }
        double target = rng.uniform() * total_rate();
        for (const auto& a : atoms_) {
            if (target < a.weight) return a.x;
            target -= a.weight;
        }
        return atoms_.back().x;
    }

    // x ~ (1 - e^{-x}) Lambda(dx) / d, via rejection against Lambda.
    double sample_size_tilted(Rng& rng) const {
        for (int i = 0; i < 100000000; ++i) {
            const double x = sample_size(rng);
            if (rng.uniform() < -std::expm1(-x)) return x;
        }
        throw std::runtime_error("sample_size_tilted: rejection cap exceeded");
    }

private:
    Kind kind_ = Kind::Atoms;
    std::vector<LambdaAtom> atoms_;
    double alpha_ = 0.0, eps_ = 0.0, xmax_ = 0.0;
    double x0_ = 0.0, p_ = 0.0, q_ = 0.0;
    int n_min_ = 0, n_max_ = 0;
};

// Size-indexed decoration law sigma_x on unit-mass trees with the structural
// periodicity sigma_x = sigma_{px}: either a single tree for every x, or a
// table indexed by log_p(x) mod 1.
class DecorationKernel {
public:
    static DecorationKernel constant(FiniteRTree unit_mass_tree) {
        check_unit_mass(unit_mass_tree);
        DecorationKernel k;
        k.table_.push_back(std::move(unit_mass_tree));
        return k;
    }

    static DecorationKernel log_periodic(double p, std::vector<FiniteRTree> table) {
        if (!(p > 0.0) || p >= 1.0)
            throw std::invalid_argument("DecorationKernel: p must lie in (0,1)");
        if (table.empty()) throw std::invalid_argument("DecorationKernel: empty table");
        for (const auto& t : table) check_unit_mass(t);
        DecorationKernel k;
        k.p_ = p;
        k.table_ = std::move(table);
        return k;
    }

    // Unit-mass point tree: a single atom of mass 1 at the root.
    static DecorationKernel unit_point_mass() {
        return constant(FiniteRTree::point_tree(1.0));
    }

    const FiniteRTree& sample(double x) const {
        if (table_.size() == 1) return table_[0];
        const double u = std::log(x) / std::log(p_);
        double f = u - std::floor(u);
        std::size_t idx = static_cast<std::size_t>(
            std::floor(f * static_cast<double>(table_.size()) + 1e-9));
        if (idx >= table_.size()) idx = 0;   // wrapped by the epsilon nudge
        return table_[idx];
    }

private:
    static void check_unit_mass(const FiniteRTree& t) {
        if (std::fabs(t.total_mass() - 1.0) > 1e-9)
            throw std::invalid_argument("DecorationKernel: trees must carry total mass 1");
    }

    double p_ = 0.5;
    std::vector<FiniteRTree> table_;
};

// ---------------------------------------------------------------------------
// Self-similar families
// ---------------------------------------------------------------------------

// The q = p family: a bare ray carrying mu = lambda * l. (p,p)-self-similar
// for every p; lambda < 1 would break mu >= l.
inline OneEndedRTree uniform_density_ray(double lambda) {
    if (!(lambda >= 1.0)) throw std::invalid_argument("uniform_density_ray: lambda must be >= 1");
    return OneEndedRTree::bare_ray(lambda - 1.0);
}

// Discrete q = p family: a ray with iid bouquet decorations of Geo(gamma)
// pendant edges. Equals discretize(uniform_density_ray(1/gamma)) in law.
inline OneEndedTree geometric_bouquet_ray(double gamma, Rng rng) {
    if (!(gamma > 0.0) || gamma > 1.0)
        throw std::invalid_argument("geometric_bouquet_ray: gamma must be in (0,1]");
    auto st = std::make_shared<Rng>(rng);
    return OneEndedTree([st, gamma]() {
        DiscreteTree dec;
        const long g = st->geometric(gamma);
        for (long i = 0; i < g; ++i) dec.add_child(DiscreteTree::root());
        return dec;
    });
}

// Translation-invariant Poisson forest along a bare spine: attachment times
// are a rate Lambda(support) Poisson process per unit spine length; each
// attachment draws a size x ~ Lambda, a tree ~ sigma_x, and grafts the copy
// rescaled by x (metric and mass).
inline OneEndedRTree poisson_forest_ray(const LambdaSpec& spec, const DecorationKernel& kernel,
                                        Rng rng) {
    const double rate = spec.total_rate();
    if (!(rate > 0.0) || !std::isfinite(rate))
        throw std::invalid_argument("poisson_forest_ray: total rate must be finite and > 0");
    struct State {
        LambdaSpec spec;
        DecorationKernel kernel;
        Rng rng;
        double rate;
    };
    auto st = std::make_shared<State>(State{spec, kernel, rng, rate});
    return OneEndedRTree([st]() {
        RSegment seg{1.0, 0.0, {}, {}};
        const long k = st->rng.poisson(st->rate);
        for (long i = 0; i < k; ++i) {
            const double off = st->rng.uniform();
            const double x = st->spec.sample_size(st->rng);
            seg.attachments.emplace_back(off, scale_by(st->kernel.sample(x), x));
        }
        std::sort(seg.attachments.begin(), seg.attachments.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        return seg;
    });
}

// Pure-jump mass path of a stable-type subordinator: Poisson jumps with
// intensity alpha * x^(-1-alpha) dx dt restricted to x >= eps_cutoff. The
// associated Hurst exponent is 1/alpha.
inline MassPath stable_jump_path(double alpha, double eps_cutoff, double horizon, Rng& rng) {
    if (!(alpha > 0.0) || alpha >= 1.0)
        throw std::invalid_argument("stable_jump_path: alpha must be in (0,1)");
    if (!(eps_cutoff > 0.0)) throw std::invalid_argument("stable_jump_path: cutoff must be > 0");
    if (!(horizon > 0.0)) throw std::invalid_argument("stable_jump_path: horizon must be > 0");
    const double rate = std::pow(eps_cutoff, -alpha);
    const long n = rng.poisson(rate * horizon);
    std::vector<MassPath::Jump> jumps;
    jumps.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        const double t = rng.uniform() * horizon;
        const double x = eps_cutoff * std::pow(rng.uniform_pos(), -1.0 / alpha);
        jumps.push_back(MassPath::Jump{t, x});
    }
    return MassPath::pure_jump(std::move(jumps), horizon);
}

// ---------------------------------------------------------------------------
// Spine reparametrizations (the (p,q) -> (p', q') family maps)
// ---------------------------------------------------------------------------

// Maps the spine point t to t^beta; subtree structure and masses unchanged,
// so a (p,q)-self-similar input becomes (p, q^beta)-self-similar. Segment
// densities are re-averaged so the continuous mass up to every original
// breakpoint is preserved exactly.
inline OneEndedRTree spine_power_reparam(const OneEndedRTree& tree, double beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("spine_power_reparam: beta must be > 0");
    struct State {
        OneEndedRTree input;
        double beta;
        int cursor = 0;
        double pos = 0.0;
    };
    auto st = std::make_shared<State>(State{tree, beta});
    return OneEndedRTree([st]() {
        const RSegment& in = st->input.segment(st->cursor++);
        const double a = st->pos;
        const double b = a + in.length;
        st->pos = b;
        const double A = std::pow(a, st->beta);
        const double B = std::pow(b, st->beta);
        RSegment out;
        out.length = B - A;
        out.density = in.density * in.length / out.length;
        for (const auto& at : in.atoms)
            out.atoms.push_back(RAtom{std::pow(a + at.offset, st->beta) - A, at.mass});
        for (const auto& [off, sub] : in.attachments)
            out.attachments.emplace_back(std::pow(a + off, st->beta) - A, sub);
        return out;
    });
}

// X^gamma(t) = int_0^t s^gamma dX(s): the jump or density contribution at
// spine position s is scaled by s^gamma, and attached subtrees are rescaled
// accordingly (metric and mass). Densities use the exact segment average of
// s^gamma. Inadmissible gamma (mass diverging near 0) is rejected.
inline OneEndedRTree mass_tilt_reparam(const OneEndedRTree& tree, double gamma) {
    {
        const RSegment& first = tree.segment(0);
        if (gamma <= -1.0 && first.density > 0.0)
            throw std::invalid_argument("mass_tilt_reparam: divergent continuous mass near 0");
        if (gamma < 0.0) {
            for (const auto& a : first.atoms)
                if (a.offset == 0.0)
                    throw std::invalid_argument("mass_tilt_reparam: atom at spine position 0");
            for (const auto& at : first.attachments)
                if (at.first == 0.0)
                    throw std::invalid_argument("mass_tilt_reparam: attachment at spine position 0");
        }
    }
    struct State {
        OneEndedRTree input;
        double gamma;
        int cursor = 0;
        double pos = 0.0;
    };
    auto st = std::make_shared<State>(State{tree, gamma});
    return OneEndedRTree([st]() {
        const RSegment& in = st->input.segment(st->cursor++);
        const double a = st->pos;
        const double b = a + in.length;
        st->pos = b;
        const double g = st->gamma;
        RSegment out;
        out.length = in.length;
        if (in.density > 0.0) {
            const double avg = (g == -1.0)
                                   ? (std::log(b) - std::log(a)) / in.length
                                   : (std::pow(b, g + 1.0) - std::pow(a, g + 1.0)) /
                                         ((g + 1.0) * in.length);
            out.density = in.density * avg;
        }
        for (const auto& at : in.atoms)
            out.atoms.push_back(RAtom{at.offset, at.mass * std::pow(a + at.offset, g)});
        for (const auto& [off, sub] : in.attachments)
            out.attachments.emplace_back(off, scale_by(sub, std::pow(a + off, g)));
        return out;
    });
}

// Replaces every jump scale x by x^delta (jump part only): an attachment of
// total mass x is rescaled by x^(delta-1), a spine atom of mass m becomes
// m^delta. Densities are untouched.
inline OneEndedRTree jump_power_reparam(const OneEndedRTree& tree, double delta) {
    if (!(delta > 0.0)) throw std::invalid_argument("jump_power_reparam: delta must be > 0");
    struct State {
        OneEndedRTree input;
        double delta;
        int cursor = 0;
    };
    auto st = std::make_shared<State>(State{tree, delta});
    return OneEndedRTree([st]() {
        const RSegment& in = st->input.segment(st->cursor++);
        RSegment out;
        out.length = in.length;
        out.density = in.density;
        for (const auto& a : in.atoms)
            out.atoms.push_back(RAtom{a.offset, std::pow(a.mass, st->delta)});
        for (const auto& [off, sub] : in.attachments) {
            const double x = sub.total_mass();
            if (x > 0.0)
                out.attachments.emplace_back(off, scale_by(sub, std::pow(x, st->delta - 1.0)));
        }
        return out;
    });
}

// Record-jump decoration sharing: walking the (pure-jump) input in spine
// order, every jump whose size exceeds all previous sizes draws a fresh
// decoration tree; jumps between consecutive records reuse the current one,
// each grafted rescaled by its own jump size. Records are indexed from the
// cutoff-truncated jump set upward.
inline OneEndedRTree record_decorations(const OneEndedRTree& tree,
                                        std::function<FiniteRTree(Rng&)> sampler, Rng rng) {
    struct State {
        OneEndedRTree input;
        std::function<FiniteRTree(Rng&)> sampler;
        Rng rng;
        int cursor = 0;
        double running_max = 0.0;
        FiniteRTree shared;
    };
    auto st = std::make_shared<State>(State{tree, std::move(sampler), rng, 0, 0.0, {}});
    return OneEndedRTree([st]() {
        const RSegment& in = st->input.segment(st->cursor++);
        if (in.density > 0.0)
            throw std::runtime_error("record_decorations: input has a continuous part");
        struct JumpEv {
            double off;
            double size;
        };
        std::vector<JumpEv> evs;
        for (const auto& a : in.atoms) evs.push_back(JumpEv{a.offset, a.mass});
        for (const auto& [off, sub] : in.attachments) {
            const double m = sub.total_mass();
            if (m > 0.0) evs.push_back(JumpEv{off, m});
        }
        std::sort(evs.begin(), evs.end(),
                  [](const JumpEv& a, const JumpEv& b) { return a.off < b.off; });
        RSegment out;
        out.length = in.length;
        for (const auto& ev : evs) {
            if (ev.size > st->running_max) {
                st->running_max = ev.size;
                st->shared = st->sampler(st->rng);
            }
            out.attachments.emplace_back(ev.off, scale_by(st->shared, ev.size));
        }
        return out;
    });
}

} // namespace treesim
