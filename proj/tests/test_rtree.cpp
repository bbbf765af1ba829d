#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "treesim/rtree.hpp"
#include "treesim/serialize.hpp"
#include "treesim/stats.hpp"

using namespace treesim;

namespace {

// segment of length 0.5 with an atom of mass 0.5 at the far end (mass 1)
FiniteRTree segment_with_end_atom() {
    FiniteRTree t;
    const int a = t.add_edge(0, 0.5);
    t.add_atom(a, 0.5, 0.5);
    return t;
}

FiniteRTree mixed_fixture() {
    FiniteRTree t;
    const int a = t.add_edge(0, 1.0, 0.25);
    const int b = t.add_edge(a, 2.0);
    t.add_edge(a, 0.5, 1.0);
    t.add_atom(b, 1.25, 0.75);
    t.set_root_atom(0.5);
    return t;
}

} // namespace

TEST_CASE("unit embedding gives unit lengths and bare length measure") {
    DiscreteTree path;
    int v = path.add_child(0);
    path.add_child(v);
    const FiniteRTree t = unit_embedding(path);
    REQUIRE(t.total_mass() == Catch::Approx(2.0));
    REQUIRE(t.total_excess() == 0.0);
    REQUIRE(t.height() == Catch::Approx(2.0));
    REQUIRE(unit_embedding(DiscreteTree::single_vertex()).total_mass() == 0.0);
}

TEST_CASE("rescale scales lengths and excess by p on finite trees") {
    const FiniteRTree t = mixed_fixture();
    const double p = 0.37, q = 0.81;
    const FiniteRTree r = rescale(t, p, q);
    REQUIRE(r.total_length() == Catch::Approx(p * t.total_length()).epsilon(1e-12));
    REQUIRE(r.total_excess() == Catch::Approx(p * t.total_excess()).epsilon(1e-12));
    REQUIRE(r.height() == Catch::Approx(p * t.height()).epsilon(1e-12));
    // p = q = 1 is the identity, bit for bit
    REQUIRE(to_text(rescale(t, 1.0, 1.0)) == to_text(t));
    REQUIRE_THROWS_AS(rescale(t, 0.0, 0.5), std::invalid_argument);
}

TEST_CASE("horizon rescale splits edges at the Spine_R boundary") {
    // path of two unit edges
    FiniteRTree t;
    const int a = t.add_edge(0, 1.0);
    const int b = t.add_edge(a, 1.0);
    t.add_atom(b, 0.9, 2.0);
    const double p = 0.5, q = 0.9, R = 1.5;
    // on the first edge, points with offset <= 1 + 1 - 1.5 = 0.5 reach R
    const FiniteRTree r = rescale_horizon(t, p, q, R);
    REQUIRE(r.total_length() ==
            Catch::Approx(0.5 * q + 0.5 * p + 1.0 * p).epsilon(1e-12));
    REQUIRE(r.total_excess() == Catch::Approx(p * 2.0).epsilon(1e-12));
    // R = 0: everything is spine
    REQUIRE(rescale_horizon(t, p, q, 0.0).total_length() ==
            Catch::Approx(q * 2.0).epsilon(1e-12));
    // R beyond reach: plain rescale
    REQUIRE(to_text(rescale_horizon(t, p, q, 10.0)) == to_text(rescale(t, p, q)));
}

TEST_CASE("discretize_given follows the strict ancestor rule") {
    // point tree with n root atoms -> star with n edges
    const FiniteRTree pt = FiniteRTree::point_tree(1.0);
    std::vector<PointRef> v1(5, PointRef{0, 0.0, 1});
    const auto star = discretize_given(pt, {}, v1);
    REQUIRE(star.tree.size() == 6);
    for (int v = 1; v < 6; ++v) REQUIRE(star.tree.parent(v) == 0);

    // segment, V0 = {0.3}, V1 = {0.2, 0.7}
    const FiniteRTree seg = FiniteRTree::segment(1.0);
    const auto got = discretize_given(seg, {PointRef{1, 0.3, 0}},
                                      {PointRef{1, 0.2, 1}, PointRef{1, 0.7, 1}});
    DiscreteTree expect;
    expect.add_child(0);                        // leaf at 0.2
    const int mid = expect.add_child(0);        // V0 at 0.3
    expect.add_child(mid);                      // leaf at 0.7
    REQUIRE(canonical_code(got.tree) == canonical_code(expect));

    // empty point sets -> single vertex
    REQUIRE(discretize_given(seg, {}, {}).tree.size() == 1);

    // coincident points are siblings
    const auto coin = discretize_given(seg, {},
                                       {PointRef{1, 0.4, 1}, PointRef{1, 0.4, 1}});
    REQUIRE(coin.tree.size() == 3);
    REQUIRE(coin.tree.parent(1) == 0);
    REQUIRE(coin.tree.parent(2) == 0);

    REQUIRE_THROWS_AS(discretize_given(seg, {PointRef{1, 2.0, 0}}, {}), std::invalid_argument);
}

TEST_CASE("V1 samples are always leaves") {
    Rng rng(8);
    const FiniteRTree t = mixed_fixture();
    for (int rep = 0; rep < 300; ++rep) {
        Rng r = rng.stream("rep", static_cast<std::uint64_t>(rep));
        const PoissonPoints pts = sample_poisson_points(t, r);
        const auto d = discretize_given(t, pts.v0, pts.v1);
        const auto children = d.tree.children();
        for (int v = 0; v < d.tree.size(); ++v)
            if (d.from_v1[static_cast<std::size_t>(v)])
                REQUIRE(children[static_cast<std::size_t>(v)].empty());
    }
}

TEST_CASE("discretize of a bare segment is a Poisson path") {
    Rng rng(44);
    const double L = 1.7;
    const FiniteRTree seg = FiniteRTree::segment(L);
    std::map<long, long> counts;
    const long N = 20000;
    for (long i = 0; i < N; ++i) {
        Rng r = rng.stream("s", static_cast<std::uint64_t>(i));
        const DiscreteTree d = discretize(seg, r);
        // all V0 in series: must be a path
        REQUIRE(d.height() == d.size() - 1);
        ++counts[d.size() - 1];
    }
    const auto rep =
        chi2_gof(counts, N, [&](long k) { return poisson_pmf(k, L); }, 1e-3, "poi-edges");
    INFO(report_text(rep));
    REQUIRE(rep.passed());
}

TEST_CASE("discretize of a root atom is a Poisson star") {
    Rng rng(45);
    const double m = 2.5;
    const FiniteRTree pt = FiniteRTree::point_tree(m);
    std::map<long, long> counts;
    const long N = 20000;
    for (long i = 0; i < N; ++i) {
        Rng r = rng.stream("s", static_cast<std::uint64_t>(i));
        const DiscreteTree d = discretize(pt, r);
        REQUIRE(d.height() <= 1);
        ++counts[d.size() - 1];
    }
    const auto rep =
        chi2_gof(counts, N, [&](long k) { return poisson_pmf(k, m); }, 1e-3, "poi-star");
    INFO(report_text(rep));
    REQUIRE(rep.passed());
}

TEST_CASE("conditioned discretization hits the requested size") {
    Rng rng(46);
    const FiniteRTree t = segment_with_end_atom();
    for (int n : {0, 1, 4}) {
        const auto res = discretize_conditioned(t, n, rng);
        REQUIRE(res.tree.size() == n + 1);
        REQUIRE(res.attempts >= 1);
    }
    REQUIRE_THROWS_AS(discretize_conditioned(FiniteRTree::point_tree(0.0), 2, rng),
                      std::invalid_argument);
    // cap exceeded: conditioning a tiny-mass tree on a large count
    REQUIRE_THROWS_AS(discretize_conditioned(FiniteRTree::point_tree(1e-6), 9, rng, 50),
                      std::runtime_error);
}

TEST_CASE("sample_point follows mu") {
    Rng rng(47);
    // bare segment: S = 0, uniform offsets
    const FiniteRTree seg = FiniteRTree::segment(2.0);
    std::vector<double> offsets, uniforms;
    for (int i = 0; i < 4000; ++i) {
        const PointRef p = sample_point(seg, rng);
        REQUIRE(p.origin == 0);
        offsets.push_back(p.offset);
        uniforms.push_back(2.0 * rng.uniform());
    }
    const auto ks = two_sample_ks(offsets, uniforms, 1e-3, "uniform-offsets");
    INFO(report_text(ks));
    REQUIRE(ks.passed());

    // single atom: always the atom, S = 1
    FiniteRTree at;
    const int e = at.add_edge(0, 0.0);
    at.add_atom(e, 0.0, 3.0);
    for (int i = 0; i < 50; ++i) {
        const PointRef p = sample_point(at, rng);
        REQUIRE(p.origin == 1);
    }

    // half length, half excess
    const FiniteRTree half = FiniteRTree::segment(1.0, 1.0);
    long excess = 0;
    const int N = 20000;
    for (int i = 0; i < N; ++i) excess += sample_point(half, rng).origin;
    REQUIRE(std::fabs(static_cast<double>(excess) / N - 0.5) < 0.02);

    REQUIRE_THROWS_AS(sample_point(FiniteRTree::point_tree(0.0), rng),
                      std::invalid_argument);
}

TEST_CASE("distance is the tree metric") {
    const FiniteRTree seg = FiniteRTree::segment(1.0);
    const PointRef a{1, 0.2, 0}, b{1, 0.7, 0};
    REQUIRE(distance(seg, a, a) == 0.0);
    REQUIRE(distance(seg, a, b) == Catch::Approx(0.5));

    FiniteRTree wedge;
    wedge.add_edge(0, 1.0);
    wedge.add_edge(0, 1.0);
    REQUIRE(distance(wedge, PointRef{1, 0.4, 0}, PointRef{2, 0.4, 0}) == Catch::Approx(0.8));

    // deeper meet: two branches hanging off a stem
    FiniteRTree y;
    const int stem = y.add_edge(0, 1.0);
    y.add_edge(stem, 1.0);
    y.add_edge(stem, 2.0);
    REQUIRE(distance(y, PointRef{2, 0.5, 0}, PointRef{3, 1.5, 0}) == Catch::Approx(2.0));
    REQUIRE(distance(y, PointRef{1, 0.25, 0}, PointRef{3, 1.5, 0}) == Catch::Approx(2.25));
}

TEST_CASE("distance matrix moments on the unit segment") {
    // oracles: E d(0,X) = int_0^1 x dx, E d(X,Y) = int int |x-y| dx dy, by
    // midpoint quadrature, frozen against their closed forms
    const int G = 2000;
    double m01 = 0.0, m12 = 0.0;
    for (int i = 0; i < G; ++i) {
        const double x = (i + 0.5) / G;
        m01 += x / G;
        for (int j = 0; j < G; ++j) m12 += std::fabs(x - (j + 0.5) / G) / (G * double(G));
    }
    REQUIRE(m01 == Catch::Approx(0.5).margin(1e-6));
    REQUIRE(m12 == Catch::Approx(1.0 / 3.0).margin(1e-6));

    Rng rng(48);
    const FiniteRTree seg = FiniteRTree::segment(1.0);
    double s01 = 0.0, s12 = 0.0;
    const int N = 20000;
    for (int i = 0; i < N; ++i) {
        Rng r = rng.stream("s", static_cast<std::uint64_t>(i));
        const DistanceMatrix m = sample_distance_matrix(seg, 2, r);
        s01 += m.at(0, 1);
        s12 += m.at(1, 2);
    }
    REQUIRE(std::fabs(s01 / N - m01) < 0.01);
    REQUIRE(std::fabs(s12 / N - m12) < 0.01);
}

TEST_CASE("distance matrices are symmetric with zero diagonal and triangle inequality") {
    Rng rng(49);
    const FiniteRTree t = [] {
        FiniteRTree f;
        const int a = f.add_edge(0, 0.4);
        f.add_edge(a, 0.3);
        f.add_atom(a, 0.2, 0.3);
        return f;
    }();
    REQUIRE(t.total_mass() == Catch::Approx(1.0));
    for (int rep = 0; rep < 200; ++rep) {
        Rng r = rng.stream("rep", static_cast<std::uint64_t>(rep));
        const DistanceMatrix m = sample_distance_matrix(t, 5, r);
        for (int i = 0; i <= 5; ++i) {
            REQUIRE(m.at(i, i) == 0.0);
            for (int j = 0; j <= 5; ++j) {
                REQUIRE(m.at(i, j) == m.at(j, i));
                for (int k = 0; k <= 5; ++k)
                    REQUIRE(m.at(i, j) <= m.at(i, k) + m.at(k, j) + 1e-12);
            }
        }
    }
    REQUIRE_THROWS_AS(sample_distance_matrix(FiniteRTree::segment(2.0), 3, rng),
                      std::invalid_argument);

    // point tree: all distances vanish
    Rng r2(50);
    const DistanceMatrix z = sample_distance_matrix(FiniteRTree::point_tree(1.0), 4, r2);
    for (int i = 0; i <= 4; ++i)
        for (int j = 0; j <= 4; ++j) REQUIRE(z.at(i, j) == 0.0);
}

TEST_CASE("sampled ancestry relation is irreflexive and transitive") {
    Rng rng(51);
    const FiniteRTree t = segment_with_end_atom();
    for (int rep = 0; rep < 60; ++rep) {
        Rng r = rng.stream("rep", static_cast<std::uint64_t>(rep));
        const AncestrySample s(t, 30, r);
        for (int i = 0; i <= 30; ++i) {
            REQUIRE_FALSE(s.rel(i, i));
            for (int j = 0; j <= 30; ++j)
                for (int k = 0; k <= 30; ++k)
                    if (s.rel(i, j) && s.rel(j, k)) REQUIRE(s.rel(i, k));
        }
        // the root precedes every non-root point
        for (int j = 1; j <= 30; ++j)
            if (!s.point(j).is_root()) REQUIRE(s.rel(0, j));
    }
}

TEST_CASE("on the unit segment the sampled relation is the offset order") {
    Rng rng(52);
    const FiniteRTree seg = FiniteRTree::segment(1.0);
    const AncestrySample s(seg, 25, rng);
    for (int i = 1; i <= 25; ++i) {
        REQUIRE(s.s_flag(i) == 0);
        for (int j = 1; j <= 25; ++j)
            REQUIRE(s.rel(i, j) == (s.point(i).offset < s.point(j).offset));
    }
}

TEST_CASE("ancestry-based distance estimator converges") {
    Rng rng(53);
    const FiniteRTree seg = FiniteRTree::segment(1.0);
    const AncestrySample s(seg, 10000, rng);
    REQUIRE(distance_from_ancestry(s, 3, 3) == 0.0);
    const double est = distance_from_ancestry(s, 1, 2);
    REQUIRE(std::fabs(est - s.dist(1, 2)) < 0.05);
    // estimator of d(root, X_j) is the fraction of points below X_j
    const double est0 = distance_from_ancestry(s, 0, 1);
    REQUIRE(std::fabs(est0 - s.point(1).offset) < 0.05);

    const AncestrySample empty(seg, 0, rng);
    REQUIRE(distance_from_ancestry(empty, 0, 0) == 0.0);
}

TEST_CASE("truncate_radius clips edges and keeps the restricted measure") {
    const FiniteRTree t = mixed_fixture();
    // r = 0: point tree, root atom kept
    const FiniteRTree zero = truncate_radius(t, 0.0);
    REQUIRE(zero.vertex_count() == 1);
    REQUIRE(zero.root_atom() == 0.5);
    // r beyond the height: identity
    REQUIRE(to_text(truncate_radius(t, 100.0)) == to_text(t));
    // r = 2: edge b is clipped to length 1, its atom at offset 1.25 dropped
    const FiniteRTree r2 = truncate_radius(t, 2.0);
    REQUIRE(r2.total_length() == Catch::Approx(1.0 + 1.0 + 0.5));
    REQUIRE(r2.total_excess() == Catch::Approx(0.5 + 0.25 + 0.5));   // root atom + densities
    // r = 2.25: the atom at depth 2.25 sits exactly on the boundary and stays
    const FiniteRTree r225 = truncate_radius(t, 2.25);
    REQUIRE(r225.total_excess() == Catch::Approx(0.5 + 0.25 + 0.5 + 0.75));
}
