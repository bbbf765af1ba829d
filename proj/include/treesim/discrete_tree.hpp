#pragma once

#include <algorithm>
#include <compare>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "treesim/rng.hpp"

namespace treesim {

// Finite rooted unordered tree. Vertex 0 is the root; every vertex stores its
// parent index, and parents always precede children (construction enforces
// the topological order, which keeps the contraction pass single-sweep).
// Values are compared up to root-preserving isomorphism via canonical_code.
class DiscreteTree {
public:
    DiscreteTree() : parent_{-1} {}

    static DiscreteTree single_vertex() { return DiscreteTree(); }

    int add_child(int parent) {
        if (parent < 0 || parent >= static_cast<int>(parent_.size()))
            throw std::invalid_argument("add_child: parent out of range");
        parent_.push_back(parent);
        return static_cast<int>(parent_.size()) - 1;
    }

    int size() const { return static_cast<int>(parent_.size()); }
    int parent(int v) const { return parent_[v]; }
    static constexpr int root() { return 0; }

    std::vector<std::vector<int>> children() const {
        std::vector<std::vector<int>> ch(parent_.size());
        for (int v = 1; v < size(); ++v) ch[parent_[v]].push_back(v);
        return ch;
    }

    std::vector<int> depths() const {
        std::vector<int> d(parent_.size(), 0);
        for (int v = 1; v < size(); ++v) d[v] = d[parent_[v]] + 1;
        return d;
    }

    // Height of the subtree below each vertex (0 for leaves).
    std::vector<int> heights() const {
        std::vector<int> h(parent_.size(), 0);
        for (int v = size() - 1; v >= 1; --v)
            h[parent_[v]] = std::max(h[parent_[v]], h[v] + 1);
        return h;
    }

    int height() const { return heights()[0]; }

    // True ancestry (v strictly precedes w on the root path).
    bool is_strict_ancestor(int v, int w) const {
        if (v == w) return false;
        while (w > v) w = parent_[w];
        return w == v;
    }

    // Grafts `sub` below vertex `at`, re-rooting sub's root onto `at`.
    // Returns the index map for sub's non-root vertices.
    std::vector<int> graft(int at, const DiscreteTree& sub) {
        std::vector<int> map(sub.size());
        map[0] = at;
        for (int v = 1; v < sub.size(); ++v) map[v] = add_child(map[sub.parent(v)]);
        return map;
    }

private:
    std::vector<int> parent_;
};

// Vertex subset used by contraction; the root flag is always set.
class KeepMask {
public:
    explicit KeepMask(int n) : kept_(n, false) {
        if (n < 1) throw std::invalid_argument("KeepMask: need at least the root");
        kept_[0] = true;
    }

    static KeepMask all(int n) {
        KeepMask m(n);
        std::fill(m.kept_.begin(), m.kept_.end(), true);
        return m;
    }

    int size() const { return static_cast<int>(kept_.size()); }
    bool kept(int v) const { return kept_[v]; }
    void keep(int v) {
        if (v < 0 || v >= size()) throw std::invalid_argument("KeepMask: vertex out of range");
        kept_[v] = true;
    }
    void drop(int v) {
        if (v == 0) throw std::invalid_argument("KeepMask: cannot drop the root");
        kept_[v] = false;
    }
    int count() const { return static_cast<int>(std::count(kept_.begin(), kept_.end(), true)); }

private:
    std::vector<bool> kept_;
};

// Contraction: induced tree on kept vertices, parent = nearest kept strict
// ancestor. The ancestral order of the output is the restriction of the
// input's order to the kept set.
inline DiscreteTree contract(const DiscreteTree& tree, const KeepMask& mask) {
    if (mask.size() != tree.size())
        throw std::invalid_argument("contract: mask size mismatch");
    if (!mask.kept(0)) throw std::invalid_argument("contract: root not kept");
    DiscreteTree out;
    std::vector<int> nearest(tree.size());   // nearest kept ancestor-or-self, as output index
    nearest[0] = 0;
    for (int v = 1; v < tree.size(); ++v) {
        const int up = nearest[tree.parent(v)];
        nearest[v] = mask.kept(v) ? out.add_child(up) : up;
    }
    return out;
}

// contract with a mask keeping the root plus a uniform m-subset of the
// non-root vertices.
inline DiscreteTree contract_uniform(const DiscreteTree& tree, int m, Rng& rng) {
    const int n = tree.size() - 1;
    if (m < 0 || m > n) throw std::invalid_argument("contract_uniform: m out of range");
    // Floyd's subset sampling keeps the draw count at m regardless of n.
    std::vector<bool> chosen(n, false);
    for (int i = n - m; i < n; ++i) {
        const int j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
        if (chosen[j])
            chosen[i] = true;
        else
            chosen[j] = true;
    }
    KeepMask mask(tree.size());
    for (int v = 0; v < n; ++v)
        if (chosen[v]) mask.keep(v + 1);
    return contract(tree, mask);
}

// Concatenation: disjoint union with all roots identified.
inline DiscreteTree concatenate(const std::vector<DiscreteTree>& trees) {
    DiscreteTree out;
    for (const auto& t : trees) out.graft(DiscreteTree::root(), t);
    return out;
}

// Order-independent byte encoding deciding rooted isomorphism (AHU form):
// code(v) = '(' + concatenation of children's codes in sorted order + ')'.
struct CanonicalCode {
    std::string bytes;
    auto operator<=>(const CanonicalCode&) const = default;
};

inline CanonicalCode canonical_code(const DiscreteTree& tree) {
    const auto ch = tree.children();
    std::vector<std::string> code(tree.size());
    for (int v = tree.size() - 1; v >= 0; --v) {
        std::vector<std::string> parts;
        parts.reserve(ch[v].size());
        for (int c : ch[v]) parts.push_back(std::move(code[c]));
        std::sort(parts.begin(), parts.end());
        std::string s = "(";
        for (const auto& p : parts) s += p;
        s += ')';
        code[v] = std::move(s);
    }
    return CanonicalCode{std::move(code[0])};
}

// Restriction to vertices at depth <= k.
inline DiscreteTree truncate(const DiscreteTree& tree, int k) {
    if (k < 0) throw std::invalid_argument("truncate: negative depth");
    const auto d = tree.depths();
    KeepMask mask(tree.size());
    for (int v = 1; v < tree.size(); ++v)
        if (d[v] <= k) mask.keep(v);
    return contract(tree, mask);   // all kept ancestors present, so parents survive as-is
}

// Number of vertices at depth r having a descendant at depth R.
inline int reach_count(const DiscreteTree& tree, int r, int R) {
    if (r < 0 || r > R) throw std::invalid_argument("reach_count: need 0 <= r <= R");
    const auto d = tree.depths();
    std::vector<int> deepest(tree.size());
    for (int v = 0; v < tree.size(); ++v) deepest[v] = d[v];
    for (int v = tree.size() - 1; v >= 1; --v)
        deepest[tree.parent(v)] = std::max(deepest[tree.parent(v)], deepest[v]);
    int count = 0;
    for (int v = 0; v < tree.size(); ++v)
        if (d[v] == r && deepest[v] >= R) ++count;
    return count;
}

// Text form: a tree is '(' children ')' recursively, children ordered by
// canonical code, so the emitted string equals the canonical code itself.
inline std::string to_text(const DiscreteTree& tree) { return canonical_code(tree).bytes; }

// Accepts any balanced-parentheses form (children in arbitrary order).
inline DiscreteTree parse_tree(std::string_view text) {
    std::size_t i = 0;
    DiscreteTree tree;
    auto fail = [&]() { throw std::invalid_argument("parse_tree: malformed input"); };
    if (text.empty() || text[i] != '(') fail();
    ++i;
    int current = 0;
    int depth = 1;
    while (i < text.size() && depth > 0) {
        if (text[i] == '(') {
            current = tree.add_child(current);
            ++depth;
        } else if (text[i] == ')') {
            --depth;
            if (depth > 0) current = tree.parent(current);
        } else {
            fail();
        }
        ++i;
    }
    if (depth != 0 || i != text.size()) fail();
    return tree;
}

} // namespace treesim
