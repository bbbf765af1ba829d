#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "treesim/one_ended_tree.hpp"
#include "treesim/stats.hpp"

using namespace treesim;

namespace {

// Ray whose decoration at spine position k is a bouquet of exactly k edges;
// handy because every decoration is distinguishable.
OneEndedTree counting_ray() {
    auto k = std::make_shared<int>(0);
    return OneEndedTree([k]() {
        DiscreteTree d;
        for (int i = 0; i < *k; ++i) d.add_child(0);
        ++*k;
        return d;
    });
}

DiscreteTree path_tree(int edges) {
    DiscreteTree t;
    int v = 0;
    for (int i = 0; i < edges; ++i) v = t.add_child(v);
    return t;
}

} // namespace

TEST_CASE("decoration stream is memoized and reproducible") {
    const OneEndedTree t = counting_ray();
    REQUIRE(canonical_code(t.decoration(3)) == canonical_code(t.decoration(3)));
    REQUIRE(t.decoration(2).size() == 3);
    REQUIRE(t.decoration(0).size() == 1);   // re-read after deeper pulls
}

TEST_CASE("decoration pulls are safe under concurrent access") {
    Rng rng(19);
    auto st = std::make_shared<Rng>(rng);
    const OneEndedTree t([st]() {
        DiscreteTree d;
        const long g = st->geometric(0.3);
        for (long i = 0; i < g; ++i) d.add_child(0);
        return d;
    });
    std::vector<std::vector<std::string>> seen(4);
    std::vector<std::thread> threads;
    for (int w = 0; w < 4; ++w)
        threads.emplace_back([&, w] {
            for (int k = 0; k < 50; ++k)
                seen[static_cast<std::size_t>(w)].push_back(
                    canonical_code(t.decoration(k)).bytes);
        });
    for (auto& th : threads) th.join();
    for (int w = 1; w < 4; ++w) REQUIRE(seen[static_cast<std::size_t>(w)] == seen[0]);
}

TEST_CASE("bare ray truncates to a path") {
    const OneEndedTree ray = OneEndedTree::bare_ray();
    REQUIRE(canonical_code(truncate(ray, 3)) == canonical_code(path_tree(3)));
    REQUIRE(reach_count(ray, 2, 7) == 1);
}

TEST_CASE("theta shift drops the first decoration") {
    const OneEndedTree t = counting_ray();
    const OneEndedTree s = theta_shift(t);
    REQUIRE(canonical_code(s.decoration(0)) == canonical_code(t.decoration(1)));
    REQUIRE(canonical_code(s.decoration(4)) == canonical_code(t.decoration(5)));
    const OneEndedTree ss = theta_shift(s);
    REQUIRE(canonical_code(ss.decoration(1)) == canonical_code(t.decoration(3)));
}

TEST_CASE("truncation of a decorated ray assembles residual-depth decorations") {
    const OneEndedTree t = counting_ray();
    const DiscreteTree got = truncate(t, 2);
    // spine 0-1-2 with bouquets of size 0,1,2; depth limit cuts nothing here
    DiscreteTree expect;
    int spine = 0;
    for (int j = 1; j <= 2; ++j) {
        spine = expect.add_child(spine);
        for (int i = 0; i < j; ++i)
            if (j + 1 <= 2) expect.add_child(spine);
    }
    // decoration at spine 1 contributes a leaf at depth 2; decoration at 2 is cut to its root
    REQUIRE(canonical_code(got).bytes == canonical_code(expect).bytes);
}

TEST_CASE("random contraction leaves the bare ray invariant") {
    Rng rng(21);
    const OneEndedTree ray = OneEndedTree::bare_ray();
    for (int rep = 0; rep < 10; ++rep) {
        const OneEndedTree c = random_contract(ray, 0.3, 0.6, rng.stream("rep", rep));
        REQUIRE(canonical_code(truncate(c, 4)) == canonical_code(path_tree(4)));
    }
    REQUIRE_THROWS_AS(random_contract(ray, 0.0, 0.5, rng), std::invalid_argument);
    REQUIRE_THROWS_AS(random_contract(ray, 0.5, 1.0, rng), std::invalid_argument);
}

TEST_CASE("finite contraction keeps Bin(n,p) vertices") {
    // oracle: enumerate all keep-masks of the 6 non-root path vertices
    const int n = 6;
    const double p = 0.3;
    std::vector<double> pmf(n + 1, 0.0);
    for (unsigned bits = 0; bits < (1u << n); ++bits) {
        int k = 0;
        double prob = 1.0;
        for (int v = 0; v < n; ++v) {
            if (bits & (1u << v)) {
                ++k;
                prob *= p;
            } else {
                prob *= 1.0 - p;
            }
        }
        pmf[k] += prob;
    }
    const DiscreteTree path = path_tree(n);
    Rng rng(2024);
    std::map<long, long> observed;
    const long N = 20000;
    for (long i = 0; i < N; ++i) {
        Rng r = rng.stream("s", static_cast<std::uint64_t>(i));
        ++observed[random_contract(path, p, 0.5, r).size() - 1];
    }
    const auto rep = chi2_gof(
        observed, N, [&](long k) { return k <= n ? pmf[static_cast<std::size_t>(k)] : 0.0; },
        1e-3, "bin-count");
    INFO(report_text(rep));
    REQUIRE(rep.passed());
}

TEST_CASE("contraction at p,q near 1 concentrates on the input") {
    const DiscreteTree path = path_tree(2);
    const CanonicalCode ref = canonical_code(path);
    Rng rng(5);
    long hits = 0;
    const long N = 2000;
    for (long i = 0; i < N; ++i) {
        Rng r = rng.stream("s", static_cast<std::uint64_t>(i));
        if (canonical_code(random_contract(path, 0.999, 0.999, r)) == ref) ++hits;
    }
    REQUIRE(static_cast<double>(hits) / N > 0.95);   // exact value (0.999)^2 = 0.998
}

TEST_CASE("lazy contraction agrees with deep-prefix horizon contraction") {
    const double p = 0.5, q = 0.6, gammaish = 0.5;
    Rng rng(99);
    auto bouquet_law = [&](Rng& r) {
        auto st = std::make_shared<Rng>(r);
        return OneEndedTree([st, gammaish]() {
            DiscreteTree d;
            const long g = st->geometric(gammaish);
            for (long i = 0; i < g; ++i) d.add_child(0);
            return d;
        });
    };
    const long N = 20000;
    const auto h_lazy = code_histogram(
        [&](Rng& r) {
            Rng rl = r.stream("law");
            Rng rc = r.stream("op");
            return truncate(random_contract(bouquet_law(rl), p, q, rc), 2);
        },
        2, N, rng.stream("lazy"), "lazy");
    const auto h_prefix = code_histogram(
        [&](Rng& r) {
            Rng rl = r.stream("law");
            Rng rc = r.stream("op");
            const DiscreteTree prefix = truncate(bouquet_law(rl), 40);
            return truncate(
                random_contract(prefix, p, q, ContractionMode::with_horizon(10), rc), 2);
        },
        2, N, rng.stream("prefix"), "prefix");
    const auto rep = two_sample_chi2(h_lazy, h_prefix, 1e-4, "lazy-vs-prefix");
    INFO(report_text(rep));
    REQUIRE(rep.passed());
}

TEST_CASE("horizon mode applies q to vertices with deep descendants") {
    const DiscreteTree path = path_tree(5);
    Rng rng(17);
    // heights along the path are 4,3,2,1,0; with M=3 the first two vertices
    // use q ~ 1 and the remaining three p ~ 0
    long expected_shape = 0;
    const long N = 2000;
    const CanonicalCode two_path = canonical_code(path_tree(2));
    for (long i = 0; i < N; ++i) {
        Rng r = rng.stream("s", static_cast<std::uint64_t>(i));
        const DiscreteTree c =
            random_contract(path, 0.001, 0.999, ContractionMode::with_horizon(3), r);
        if (canonical_code(c) == two_path) ++expected_shape;
    }
    REQUIRE(static_cast<double>(expected_shape) / N > 0.97);
}

TEST_CASE("horizon mode on lazy trees treats tall decoration vertices as spine-like") {
    // every decoration is a path of height 3; with M = 2 the first path vertex
    // (height 2) keeps with probability q, the deeper ones with p
    auto tall_ray = [] {
        return OneEndedTree([]() {
            DiscreteTree d;
            int v = 0;
            for (int i = 0; i < 3; ++i) v = d.add_child(v);
            return d;
        });
    };
    Rng rng(23);
    long expected_shape = 0;
    const long N = 1000;
    for (long i = 0; i < N; ++i) {
        const OneEndedTree c = random_contract(
            tall_ray(), 0.001, 0.999, ContractionMode::with_horizon(2),
            rng.stream("s", static_cast<std::uint64_t>(i)));
        // decoration 0 should keep exactly the height-2 vertex almost surely
        if (canonical_code(c.decoration(0)).bytes == "(())") ++expected_shape;
    }
    REQUIRE(static_cast<double>(expected_shape) / N > 0.97);
}

TEST_CASE("spine pruning keeps a geometric prefix") {
    Rng rng(31);
    const OneEndedTree ray = OneEndedTree::bare_ray();
    const double lambda = 1.0;
    const double success = lambda / (1.0 + lambda);
    std::map<long, long> observed;
    const long N = 20000;
    for (long i = 0; i < N; ++i) {
        Rng r = rng.stream("s", static_cast<std::uint64_t>(i));
        ++observed[prune_spine(ray, lambda, r).size() - 1];   // surviving spine vertices
    }
    const auto rep = chi2_gof(
        observed, N,
        [&](long k) { return std::pow(1.0 - success, static_cast<double>(k)) * success; }, 1e-3,
        "geo-prefix");
    INFO(report_text(rep));
    REQUIRE(rep.passed());

    // lambda -> infinity: only the root decoration survives
    long singletons = 0;
    for (long i = 0; i < 1000; ++i) {
        Rng r = rng.stream("t", static_cast<std::uint64_t>(i));
        if (prune_spine(ray, 1e6, r).size() == 1) ++singletons;
    }
    REQUIRE(singletons >= 998);
    REQUIRE_THROWS_AS(prune_spine(ray, 0.0, rng), std::invalid_argument);
}
