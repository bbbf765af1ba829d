#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "treesim/discrete_tree.hpp"
#include "treesim/numerics.hpp"
#include "treesim/one_ended_rtree.hpp"
#include "treesim/one_ended_tree.hpp"
#include "treesim/rng.hpp"
#include "treesim/rtree.hpp"

namespace treesim {

// Empirical law of a truncation code: the cylinder events of the local
// topology, counted over iid samples.
struct CodeHistogram {
    std::map<std::string, long> counts;
    long total = 0;
    int depth = -1;   // -1: full-depth codes

    void add(const std::string& code) {
        ++counts[code];
        ++total;
    }

    void merge(const CodeHistogram& other) {
        for (const auto& [k, v] : other.counts) counts[k] += v;
        total += other.total;
    }
};

struct TestReport {
    std::string name;
    std::string method;    // chi2 | ks | tv | exact
    double statistic = 0.0;
    double p_value = std::numeric_limits<double>::quiet_NaN();
    long df = 0;
    long n1 = 0;
    long n2 = 0;
    double level = 0.0;
    std::string verdict;   // pass | fail | inconclusive | report
    std::uint64_t seed = 0;
    std::string params;
    std::string notes;

    bool passed() const { return verdict == "pass"; }
};

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string csv_header() {
    return "test,method,statistic,p_value,df,n1,n2,level,verdict,seed,params,notes";
}

inline std::string csv_row(const TestReport& r) {
    std::string out;
    out += r.name + ',' + r.method + ',' + format_double(r.statistic) + ',';
    out += std::isnan(r.p_value) ? "" : format_double(r.p_value);
    out += ',' + std::to_string(r.df) + ',' + std::to_string(r.n1) + ',' + std::to_string(r.n2);
    out += ',' + format_double(r.level) + ',' + r.verdict + ',' + std::to_string(r.seed);
    out += ",\"" + r.params + "\",\"" + r.notes + "\"";
    return out;
}

inline std::string report_text(const TestReport& r) {
    std::string out = "[" + r.verdict + "] " + r.name + " (" + r.method + ")";
    out += " statistic=" + format_double(r.statistic);
    if (!std::isnan(r.p_value)) out += " p=" + format_double(r.p_value);
    if (r.df > 0) out += " df=" + std::to_string(r.df);
    out += " n1=" + std::to_string(r.n1) + " n2=" + std::to_string(r.n2);
    out += " level=" + format_double(r.level) + " seed=" + std::to_string(r.seed);
    if (!r.params.empty()) out += " {" + r.params + "}";
    if (!r.notes.empty()) out += " -- " + r.notes;
    return out;
}

// ---------------------------------------------------------------------------
// Sampling into histograms
// ---------------------------------------------------------------------------

// A law of finite trees (already truncated or inherently finite).
using TreeLaw = std::function<DiscreteTree(Rng&)>;

namespace detail {

inline int worker_count(long n) {
    const unsigned hw = std::thread::hardware_concurrency();
    const long cap = std::max(1L, n / 4096);
    return static_cast<int>(std::min<long>(std::max(1u, hw), std::min<long>(cap, 8)));
}

} // namespace detail

// N iid samples of the law, truncated (depth >= 0) and coded. Replicates are
// distributed over threads by index stride; every replicate derives its own
// stream from (rng key, label, index), and the sorted-map merge makes the
// result independent of the thread count.
inline CodeHistogram code_histogram(const TreeLaw& law, int depth, long n, const Rng& rng,
                                    const char* label = "hist") {
    if (n < 1) throw std::invalid_argument("code_histogram: need n >= 1");
    CodeHistogram hist;
    hist.depth = depth;
    const int workers = detail::worker_count(n);
    std::vector<CodeHistogram> parts(static_cast<std::size_t>(workers));
    auto run = [&](int w) {
        for (long i = w; i < n; i += workers) {
            Rng local = rng.stream(label, static_cast<std::uint64_t>(i));
            DiscreteTree t = law(local);
            if (depth >= 0) t = truncate(t, depth);
            parts[static_cast<std::size_t>(w)].add(canonical_code(t).bytes);
        }
    };
    if (workers == 1) {
        run(0);
    } else {
        std::vector<std::thread> threads;
        for (int w = 0; w < workers; ++w) threads.emplace_back(run, w);
        for (auto& t : threads) t.join();
    }
    for (const auto& p : parts) hist.merge(p);
    return hist;
}

// ---------------------------------------------------------------------------
// Two-sample and goodness-of-fit machinery
// ---------------------------------------------------------------------------

namespace detail {

struct PooledPair {
    std::vector<std::pair<double, double>> buckets;   // observed pairs
    long pooled_away = 0;                             // buckets merged into the tail
};

// Buckets with expected count < 5 on either side are merged into one pooled
// bucket; pooling never discards mass.
inline PooledPair pool_two(const CodeHistogram& h1, const CodeHistogram& h2) {
    const double n1 = static_cast<double>(h1.total);
    const double n2 = static_cast<double>(h2.total);
    std::map<std::string, std::pair<long, long>> joint;
    for (const auto& [k, v] : h1.counts) joint[k].first = v;
    for (const auto& [k, v] : h2.counts) joint[k].second = v;
    PooledPair out;
    double o1 = 0, o2 = 0;
    bool have_pool = false;
    for (const auto& [k, cv] : joint) {
        const double both = static_cast<double>(cv.first + cv.second);
        const double e1 = both * n1 / (n1 + n2);
        const double e2 = both * n2 / (n1 + n2);
        if (e1 >= 5.0 && e2 >= 5.0) {
            out.buckets.emplace_back(static_cast<double>(cv.first),
                                     static_cast<double>(cv.second));
        } else {
            o1 += static_cast<double>(cv.first);
            o2 += static_cast<double>(cv.second);
            have_pool = true;
            ++out.pooled_away;
        }
    }
    if (have_pool) out.buckets.emplace_back(o1, o2);
    return out;
}

} // namespace detail

// Two-sample chi-square on code histograms. Degenerate pooling (a single
// bucket) is reported as inconclusive, never as a pass.
inline TestReport two_sample_chi2(const CodeHistogram& h1, const CodeHistogram& h2, double level,
                                  std::string name) {
    TestReport r;
    r.name = std::move(name);
    r.method = "chi2";
    r.level = level;
    r.n1 = h1.total;
    r.n2 = h2.total;
    const auto pooled = detail::pool_two(h1, h2);
    if (pooled.buckets.size() < 2) {
        r.verdict = "inconclusive";
        r.notes = "degenerate pooling: single bucket";
        return r;
    }
    const double n1 = static_cast<double>(h1.total);
    const double n2 = static_cast<double>(h2.total);
    double stat = 0.0;
    for (const auto& [c1, c2] : pooled.buckets) {
        const double both = c1 + c2;
        const double e1 = both * n1 / (n1 + n2);
        const double e2 = both * n2 / (n1 + n2);
        if (e1 > 0.0) stat += (c1 - e1) * (c1 - e1) / e1;
        if (e2 > 0.0) stat += (c2 - e2) * (c2 - e2) / e2;
    }
    r.statistic = stat;
    r.df = static_cast<long>(pooled.buckets.size()) - 1;
    r.p_value = chi_square_pvalue(stat, static_cast<double>(r.df));
    r.verdict = r.p_value >= level ? "pass" : "fail";
    if (pooled.pooled_away > 0)
        r.notes = std::to_string(pooled.pooled_away) + " rare buckets pooled";
    return r;
}

// Two-sample Kolmogorov-Smirnov on scalar samples.
inline TestReport two_sample_ks(std::vector<double> a, std::vector<double> b, double level,
                                std::string name) {
    TestReport r;
    r.name = std::move(name);
    r.method = "ks";
    r.level = level;
    r.n1 = static_cast<long>(a.size());
    r.n2 = static_cast<long>(b.size());
    if (a.empty() || b.empty()) {
        r.verdict = "inconclusive";
        r.notes = "empty sample";
        return r;
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        // advance both past the current value so ties never inflate the gap
        const double x = std::fmin(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        const double fa = static_cast<double>(i) / static_cast<double>(a.size());
        const double fb = static_cast<double>(j) / static_cast<double>(b.size());
        d = std::fmax(d, std::fabs(fa - fb));
    }
    r.statistic = d;
    r.p_value = ks_two_sample_pvalue(d, a.size(), b.size());
    r.verdict = r.p_value >= level ? "pass" : "fail";
    return r;
}

// One-sample chi-square goodness of fit of integer counts against a pmf on
// {0,1,...}. Adjacent values are pooled until every expected count is >= 5;
// the upper tail forms the final bucket.
inline TestReport chi2_gof(const std::map<long, long>& observed, long n_samples,
                           const std::function<double(long)>& pmf, double level,
                           std::string name) {
    TestReport r;
    r.name = std::move(name);
    r.method = "chi2";
    r.level = level;
    r.n1 = n_samples;
    long k_hi = observed.empty() ? 0 : observed.rbegin()->first;
    // extend until the remaining tail is negligible for pooling purposes
    double cum = 0.0;
    for (long k = 0; k <= k_hi; ++k) cum += pmf(k);
    while (n_samples * (1.0 - cum) >= 2.5 && k_hi < (1L << 22)) {
        ++k_hi;
        cum += pmf(k_hi);
    }
    std::vector<std::pair<double, double>> buckets;   // (observed, expected)
    double o_acc = 0.0, e_acc = 0.0;
    for (long k = 0; k <= k_hi; ++k) {
        const auto it = observed.find(k);
        o_acc += it == observed.end() ? 0.0 : static_cast<double>(it->second);
        e_acc += static_cast<double>(n_samples) * pmf(k);
        if (e_acc >= 5.0) {
            buckets.emplace_back(o_acc, e_acc);
            o_acc = e_acc = 0.0;
        }
    }
    // tail bucket: everything beyond k_hi plus any unflushed accumulator
    for (const auto& [k, v] : observed)
        if (k > k_hi) o_acc += static_cast<double>(v);
    e_acc += static_cast<double>(n_samples) * (1.0 - cum);
    if (e_acc > 0.0 || o_acc > 0.0) {
        if (!buckets.empty() && e_acc < 5.0) {
            buckets.back().first += o_acc;
            buckets.back().second += e_acc;
        } else {
            buckets.emplace_back(o_acc, e_acc);
        }
    }
    if (buckets.size() < 2) {
        r.verdict = "inconclusive";
        r.notes = "degenerate pooling: single bucket";
        return r;
    }
    double stat = 0.0;
    for (const auto& [o, e] : buckets) stat += (o - e) * (o - e) / e;
    r.statistic = stat;
    r.df = static_cast<long>(buckets.size()) - 1;
    r.p_value = chi_square_pvalue(stat, static_cast<double>(r.df));
    r.verdict = r.p_value >= level ? "pass" : "fail";
    return r;
}

// ---------------------------------------------------------------------------
// The four flagship identity tests
// ---------------------------------------------------------------------------

// Law of a lazily generated one-ended tree and a transform acting on it.
using LazyLaw = std::function<OneEndedTree(Rng&)>;
using LazyTransform = std::function<OneEndedTree(const OneEndedTree&, Rng&)>;

// Fixed-point test T =law transform(T): truncation-code histograms of both
// sides at the given depth.
inline TestReport invariance_test(const LazyLaw& law, const LazyTransform& transform, int depth,
                                  long n, double level, const Rng& rng, std::string name) {
    const auto h1 = code_histogram(
        [&](Rng& r) {
            Rng r1 = r.stream("law");
            return truncate(law(r1), depth);
        },
        depth, n, rng, "side1");
    const auto h2 = code_histogram(
        [&](Rng& r) {
            Rng r1 = r.stream("law");
            Rng r2 = r.stream("transform");
            return truncate(transform(law(r1), r2), depth);
        },
        depth, n, rng, "side2");
    auto rep = two_sample_chi2(h1, h2, level, std::move(name));
    rep.seed = rng.key();
    return rep;
}

// Commutation D(S^R(T)) =law S(D(T)) on a finite measured tree, compared via
// full-depth codes.
inline TestReport commutation_test(const FiniteRTree& tree, double p, double q, long n,
                                   double level, const Rng& rng, std::string name) {
    const FiniteRTree rescaled = rescale(tree, p, q);
    const auto h1 = code_histogram(
        [&](Rng& r) { return discretize(rescaled, r); }, -1, n, rng, "rescale-then-D");
    const auto h2 = code_histogram(
        [&](Rng& r) {
            DiscreteTree d = discretize(tree, r);
            return random_contract(d, p, q, r);
        },
        -1, n, rng, "D-then-contract");
    auto rep = two_sample_chi2(h1, h2, level, std::move(name));
    rep.seed = rng.key();
    return rep;
}

// Compatibility C(D[T][n], m) =law D[T][m] for a probability-mass tree.
inline TestReport compatibility_test(const FiniteRTree& tree, int n_big, int m_small, long n,
                                     double level, const Rng& rng, std::string name,
                                     long attempt_cap = 10000000L) {
    require_probability_mass(tree);
    if (m_small > n_big)
        throw std::invalid_argument("compatibility_test: need m <= n");
    const auto h1 = code_histogram(
        [&](Rng& r) {
            DiscreteTree big = discretize_conditioned(tree, n_big, r, attempt_cap).tree;
            return contract_uniform(big, m_small, r);
        },
        -1, n, rng, "contracted-big");
    const auto h2 = code_histogram(
        [&](Rng& r) { return discretize_conditioned(tree, m_small, r, attempt_cap).tree; }, -1,
        n, rng, "small");
    auto rep = two_sample_chi2(h1, h2, level, std::move(name));
    rep.seed = rng.key();
    return rep;
}

// Estimated total-variation distance between two code histograms: half the l1
// distance of the pooled empirical laws (conservative, bias noted in report).
inline double tv_estimate(const CodeHistogram& h1, const CodeHistogram& h2) {
    const auto pooled = detail::pool_two(h1, h2);
    const double n1 = static_cast<double>(h1.total);
    const double n2 = static_cast<double>(h2.total);
    double l1 = 0.0;
    for (const auto& [c1, c2] : pooled.buckets) l1 += std::fabs(c1 / n1 - c2 / n2);
    return 0.5 * l1;
}

// Coupling-gap series: for k = 1..n_powers estimates TV between the depth-d
// code laws of S_{p^k,q^k}(T) and D(S^R_{p^k,q^k}(iota(T))). The trend is
// reported; thresholds are the caller's business.
inline std::vector<TestReport> coupling_gap_test(const LazyLaw& law, double p, double q,
                                                 int n_powers, int depth, long n, const Rng& rng,
                                                 const std::string& name);

// Finite-tree variant: the randomness lies in the operators alone.
inline std::vector<TestReport> coupling_gap_test(const DiscreteTree& tree, double p, double q,
                                                 int n_powers, int depth, long n, const Rng& rng,
                                                 const std::string& name) {
    std::vector<TestReport> series;
    const FiniteRTree embedded = unit_embedding(tree);
    for (int k = 1; k <= n_powers; ++k) {
        const double pk = std::pow(p, k);
        const double qk = std::pow(q, k);
        TestReport r;
        r.name = name + "/k=" + std::to_string(k);
        r.method = "tv";
        r.seed = rng.key();
        r.params = "p^k=" + format_double(pk) + ";q^k=" + format_double(qk);
        r.n1 = r.n2 = n;
        if (n == 0) {
            r.verdict = "inconclusive";
            r.notes = "no samples";
            series.push_back(std::move(r));
            continue;
        }
        const Rng rk = rng.stream("power", static_cast<std::uint64_t>(k));
        const auto h1 = code_histogram(
            [&](Rng& rr) { return truncate(random_contract(tree, pk, qk, rr), depth); }, depth,
            n, rk, "contract-side");
        const FiniteRTree rescaled = rescale(embedded, pk, qk);
        const auto h2 = code_histogram(
            [&](Rng& rr) { return truncate(discretize(rescaled, rr), depth); }, depth, n, rk,
            "embed-side");
        r.statistic = tv_estimate(h1, h2);
        r.verdict = "report";
        r.notes = "pooled empirical TV; conservative bias";
        series.push_back(std::move(r));
    }
    return series;
}

inline std::vector<TestReport> coupling_gap_test(const LazyLaw& law, double p, double q,
                                                 int n_powers, int depth, long n, const Rng& rng,
                                                 const std::string& name) {
    std::vector<TestReport> series;
    for (int k = 1; k <= n_powers; ++k) {
        const double pk = std::pow(p, k);
        const double qk = std::pow(q, k);
        TestReport r;
        r.name = name + "/k=" + std::to_string(k);
        r.method = "tv";
        r.seed = rng.key();
        r.params = "p^k=" + format_double(pk) + ";q^k=" + format_double(qk);
        r.n1 = r.n2 = n;
        if (n == 0) {
            r.verdict = "inconclusive";
            r.notes = "no samples";
            series.push_back(std::move(r));
            continue;
        }
        const Rng rk = rng.stream("power", static_cast<std::uint64_t>(k));
        const auto h1 = code_histogram(
            [&](Rng& rr) {
                Rng r1 = rr.stream("law");
                Rng r2 = rr.stream("op");
                return truncate(random_contract(law(r1), pk, qk, r2), depth);
            },
            depth, n, rk, "contract-side");
        const auto h2 = code_histogram(
            [&](Rng& rr) {
                Rng r1 = rr.stream("law");
                Rng r2 = rr.stream("op");
                return truncate(discretize(rescale(unit_embedding(law(r1)), pk, qk), r2), depth);
            },
            depth, n, rk, "embed-side");
        r.statistic = tv_estimate(h1, h2);
        r.verdict = "report";
        r.notes = "pooled empirical TV; conservative bias";
        series.push_back(std::move(r));
    }
    return series;
}

} // namespace treesim
