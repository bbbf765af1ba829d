#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <vector>

#include "treesim/discrete_tree.hpp"
#include "treesim/rng.hpp"

using namespace treesim;

namespace {

DiscreteTree two_edge_path() {
    DiscreteTree t;
    const int a = t.add_child(0);
    t.add_child(a);
    return t;
}

DiscreteTree cherry() {
    DiscreteTree t;
    t.add_child(0);
    t.add_child(0);
    return t;
}

// All parent arrays with parent[v] < v; covers every rooted tree shape on n
// vertices (possibly repeating isomorphism classes).
void for_each_tree(int n, const std::function<void(const DiscreteTree&)>& fn,
                   DiscreteTree t = DiscreteTree()) {
    if (t.size() == n) {
        fn(t);
        return;
    }
    for (int p = 0; p < t.size(); ++p) {
        DiscreteTree next = t;
        next.add_child(p);
        for_each_tree(n, fn, next);
    }
}

DiscreteTree random_tree(int n, Rng& rng) {
    DiscreteTree t;
    for (int v = 1; v < n; ++v)
        t.add_child(static_cast<int>(rng.below(static_cast<std::uint64_t>(v))));
    return t;
}

} // namespace

TEST_CASE("contract collapses dropped vertices onto kept ancestors") {
    // path root-a-b, keep {root, b} -> single edge
    DiscreteTree path = two_edge_path();
    KeepMask m(3);
    m.keep(2);
    const DiscreteTree c = contract(path, m);
    REQUIRE(c.size() == 2);
    REQUIRE(c.parent(1) == 0);

    // keep everything -> isomorphic
    REQUIRE(canonical_code(contract(path, KeepMask::all(3))) == canonical_code(path));

    // root->a, a->{b,c}, keep {root,b,c} -> cherry
    DiscreteTree t;
    const int a = t.add_child(0);
    t.add_child(a);
    t.add_child(a);
    KeepMask m2(4);
    m2.keep(2);
    m2.keep(3);
    REQUIRE(canonical_code(contract(t, m2)) == canonical_code(cherry()));
}

TEST_CASE("contract validates its mask") {
    DiscreteTree t = two_edge_path();
    REQUIRE_THROWS_AS(contract(t, KeepMask(2)), std::invalid_argument);
    KeepMask m(3);
    REQUIRE_THROWS_AS(m.drop(0), std::invalid_argument);   // the root cannot be dropped
}

TEST_CASE("contract preserves the ancestral order restriction (exhaustive n<=6)") {
    for (int n = 1; n <= 6; ++n) {
        for_each_tree(n, [&](const DiscreteTree& t) {
            const int nonroot = t.size() - 1;
            for (unsigned bits = 0; bits < (1u << nonroot); ++bits) {
                KeepMask mask(t.size());
                std::vector<int> out_index(t.size(), -1);
                int next = 1;
                out_index[0] = 0;
                for (int v = 1; v < t.size(); ++v)
                    if (bits & (1u << (v - 1))) {
                        mask.keep(v);
                        out_index[v] = next++;
                    }
                const DiscreteTree c = contract(t, mask);
                for (int v = 0; v < t.size(); ++v) {
                    if (out_index[v] < 0) continue;
                    for (int w = 0; w < t.size(); ++w) {
                        if (out_index[w] < 0) continue;
                        REQUIRE(c.is_strict_ancestor(out_index[v], out_index[w]) ==
                                t.is_strict_ancestor(v, w));
                    }
                }
            }
        });
    }
}

TEST_CASE("contraction composes (exhaustive n<=5)") {
    for (int n = 1; n <= 5; ++n) {
        for_each_tree(n, [&](const DiscreteTree& t) {
            const int nonroot = t.size() - 1;
            for (unsigned b1 = 0; b1 < (1u << nonroot); ++b1) {
                KeepMask m1(t.size());
                std::vector<int> kept;   // input indices kept by m1, in order
                for (int v = 1; v < t.size(); ++v)
                    if (b1 & (1u << (v - 1))) {
                        m1.keep(v);
                        kept.push_back(v);
                    }
                const DiscreteTree once = contract(t, m1);
                for (unsigned b2 = 0; b2 < (1u << kept.size()); ++b2) {
                    KeepMask m2(once.size());
                    KeepMask both(t.size());
                    for (std::size_t i = 0; i < kept.size(); ++i)
                        if (b2 & (1u << i)) {
                            m2.keep(static_cast<int>(i) + 1);
                            both.keep(kept[i]);
                        }
                    REQUIRE(canonical_code(contract(once, m2)) ==
                            canonical_code(contract(t, both)));
                }
            }
        });
    }
}

TEST_CASE("contract_uniform edge cases") {
    Rng rng(11);
    DiscreteTree path = two_edge_path();
    // m = n: identity up to isomorphism
    REQUIRE(canonical_code(contract_uniform(path, 2, rng)) == canonical_code(path));
    // both 1-subsets of a 2-edge path contract to the single edge
    for (int i = 0; i < 20; ++i)
        REQUIRE(contract_uniform(path, 1, rng).size() == 2);
    // cherry, m = 1 -> single edge by symmetry
    DiscreteTree ch = cherry();
    for (int i = 0; i < 20; ++i)
        REQUIRE(contract_uniform(ch, 1, rng).size() == 2);
    REQUIRE_THROWS_AS(contract_uniform(path, 3, rng), std::invalid_argument);
}

TEST_CASE("canonical codes decide isomorphism") {
    REQUIRE(canonical_code(two_edge_path()) != canonical_code(cherry()));
    REQUIRE(canonical_code(DiscreteTree::single_vertex()).bytes == "()");

    // same shape, two insertion orders
    DiscreteTree t1;
    const int a1 = t1.add_child(0);
    t1.add_child(a1);
    t1.add_child(0);
    DiscreteTree t2;
    t2.add_child(0);
    const int a2 = t2.add_child(0);
    t2.add_child(a2);
    REQUIRE(canonical_code(t1) == canonical_code(t2));
}

TEST_CASE("canonical code is invariant under child-order shuffles") {
    Rng rng(123);
    const DiscreteTree t = random_tree(24, rng);
    const CanonicalCode ref = canonical_code(t);
    const auto children = t.children();
    for (int rep = 0; rep < 1000; ++rep) {
        // rebuild with a random DFS order of children
        DiscreteTree shuffled;
        std::vector<int> map(static_cast<std::size_t>(t.size()), -1);
        map[0] = 0;
        std::vector<int> stack{0};
        while (!stack.empty()) {
            const int v = stack.back();
            stack.pop_back();
            auto kids = children[static_cast<std::size_t>(v)];
            for (std::size_t i = kids.size(); i > 1; --i)
                std::swap(kids[i - 1], kids[rng.below(i)]);
            for (int c : kids) {
                map[static_cast<std::size_t>(c)] = shuffled.add_child(map[static_cast<std::size_t>(v)]);
                stack.push_back(c);
            }
        }
        REQUIRE(canonical_code(shuffled) == ref);
    }
}

TEST_CASE("truncate restricts to depth k") {
    REQUIRE(truncate(two_edge_path(), 0).size() == 1);
    REQUIRE(canonical_code(truncate(cherry(), 5)) == canonical_code(cherry()));
    DiscreteTree t = two_edge_path();
    REQUIRE(canonical_code(truncate(t, 1)).bytes == "(())");
}

TEST_CASE("reach_count counts vertices whose subtree reaches depth R") {
    // root with two length-5 paths attached
    DiscreteTree t;
    for (int branch = 0; branch < 2; ++branch) {
        int v = t.add_child(0);
        for (int i = 1; i < 5; ++i) v = t.add_child(v);
    }
    REQUIRE(reach_count(t, 1, 5) == 2);
    REQUIRE(reach_count(t, 0, 5) == 1);
    REQUIRE(reach_count(t, 3, 6) == 0);   // height is 5
    REQUIRE_THROWS_AS(reach_count(t, 3, 2), std::invalid_argument);

    // monotone: nondecreasing in r, nonincreasing in R
    Rng rng(77);
    for (int rep = 0; rep < 50; ++rep) {
        const DiscreteTree rt = random_tree(30, rng);
        for (int r = 0; r < 4; ++r)
            for (int R = r; R < 5; ++R) {
                REQUIRE(reach_count(rt, r, R + 1) <= reach_count(rt, r, R));
                if (r + 1 <= R) REQUIRE(reach_count(rt, r + 1, R) >= reach_count(rt, r, R));
            }
    }
}

TEST_CASE("tree text form matches the canonical examples") {
    REQUIRE(to_text(DiscreteTree::single_vertex()) == "()");
    REQUIRE(to_text(two_edge_path()) == "((()))");
    REQUIRE(to_text(cherry()) == "(()())");
    // parser accepts unsorted children and emission normalizes
    REQUIRE(to_text(parse_tree("(()(()))")) == "((())())");
    REQUIRE_THROWS_AS(parse_tree("(()"), std::invalid_argument);
    REQUIRE_THROWS_AS(parse_tree("()()"), std::invalid_argument);
    REQUIRE_THROWS_AS(parse_tree(""), std::invalid_argument);

    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const DiscreteTree t = random_tree(1 + static_cast<int>(rng.below(20)), rng);
        REQUIRE(canonical_code(parse_tree(to_text(t))) == canonical_code(t));
    }
}

TEST_CASE("concatenate identifies roots") {
    DiscreteTree edge;
    edge.add_child(0);
    REQUIRE(canonical_code(concatenate({edge, edge})) == canonical_code(cherry()));
    REQUIRE(concatenate({}).size() == 1);
}
