#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

#include "treesim/discrete_tree.hpp"
#include "treesim/rng.hpp"

namespace treesim {

struct RAtom {
    double offset = 0.0;
    double mass = 0.0;
};

// Finite rooted measured R-tree with mu >= l by construction: the length
// measure lives on the skeleton edges and the excess mu - l is stored
// explicitly as a constant density per edge plus atoms (point masses).
//
// Vertex 0 is the root; the edge into vertex v (v >= 1) carries a length, an
// excess density and its atoms, with atom offsets measured from the parent
// endpoint. An optional atom may sit at the root itself.
class FiniteRTree {
public:
    FiniteRTree() : parent_{-1}, length_{0.0}, density_{0.0}, atoms_(1) {}

    static FiniteRTree point_tree(double root_atom_mass = 0.0) {
        FiniteRTree t;
        if (root_atom_mass > 0.0) t.set_root_atom(root_atom_mass);
        return t;
    }

    static FiniteRTree segment(double length, double density = 0.0) {
        FiniteRTree t;
        t.add_edge(0, length, density);
        return t;
    }

    int add_edge(int parent, double length, double density = 0.0) {
        if (parent < 0 || parent >= vertex_count())
            throw std::invalid_argument("add_edge: parent out of range");
        if (!(length >= 0.0)) throw std::invalid_argument("add_edge: negative length");
        if (!(density >= 0.0)) throw std::invalid_argument("add_edge: negative density");
        parent_.push_back(parent);
        length_.push_back(length);
        density_.push_back(density);
        atoms_.emplace_back();
        return vertex_count() - 1;
    }

    void add_atom(int edge, double offset, double mass) {
        if (edge < 1 || edge >= vertex_count())
            throw std::invalid_argument("add_atom: edge out of range");
        if (!(mass > 0.0)) throw std::invalid_argument("add_atom: mass must be > 0");
        if (!(offset >= 0.0) || offset > length_[edge])
            throw std::invalid_argument("add_atom: offset outside edge");
        atoms_[edge].push_back(RAtom{offset, mass});
    }

    void set_root_atom(double mass) {
        if (!(mass >= 0.0)) throw std::invalid_argument("set_root_atom: negative mass");
        root_atom_ = mass;
    }

    int vertex_count() const { return static_cast<int>(parent_.size()); }
    int parent(int v) const { return parent_[v]; }
    double length(int v) const { return length_[v]; }
    double density(int v) const { return density_[v]; }
    const std::vector<RAtom>& atoms(int v) const { return atoms_[v]; }
    double root_atom() const { return root_atom_; }

    double depth(int v) const {
        double d = 0.0;
        while (v != 0) {
            d += length_[v];
            v = parent_[v];
        }
        return d;
    }

    double height() const {
        std::vector<double> d(parent_.size(), 0.0);
        double h = 0.0;
        for (int v = 1; v < vertex_count(); ++v) {
            d[v] = d[parent_[v]] + length_[v];
            h = std::max(h, d[v]);
        }
        return h;
    }

    double total_length() const {
        double s = 0.0;
        for (int v = 1; v < vertex_count(); ++v) s += length_[v];
        return s;
    }

    double total_excess() const {
        double s = root_atom_;
        for (int v = 1; v < vertex_count(); ++v) {
            s += length_[v] * density_[v];
            for (const auto& a : atoms_[v]) s += a.mass;
        }
        return s;
    }

    double total_mass() const { return total_length() + total_excess(); }

    // Height of the subtree hanging below each vertex (metric units).
    std::vector<double> subtree_heights() const {
        std::vector<double> h(parent_.size(), 0.0);
        for (int v = vertex_count() - 1; v >= 1; --v)
            h[parent_[v]] = std::max(h[parent_[v]], h[v] + length_[v]);
        return h;
    }

private:
    std::vector<int> parent_;
    std::vector<double> length_;
    std::vector<double> density_;
    std::vector<std::vector<RAtom>> atoms_;
    double root_atom_ = 0.0;
};

// A location on a FiniteRTree plus the origin flag S of the sampling law
// (0 = drawn from the length measure, 1 = drawn from the excess mu - l).
// Canonical form: the root is (edge 0, offset 0); any other location has
// edge >= 1 and offset in (0, length], so a point sitting exactly on a
// skeleton vertex is carried by that vertex's incoming edge.
struct PointRef {
    int edge = 0;
    double offset = 0.0;
    int origin = 0;

    bool is_root() const { return edge == 0; }
    bool same_location(const PointRef& o) const {
        return edge == o.edge && offset == o.offset;
    }
};

namespace detail {

inline PointRef canonical(const FiniteRTree& t, PointRef p) {
    if (p.edge < 0 || p.edge >= t.vertex_count())
        throw std::invalid_argument("point ref outside tree");
    if (p.edge == 0) {
        if (p.offset != 0.0) throw std::invalid_argument("root point with nonzero offset");
        return p;
    }
    if (!(p.offset >= 0.0) || p.offset > t.length(p.edge))
        throw std::invalid_argument("point offset outside edge");
    while (p.edge != 0 && p.offset == 0.0) {
        const int u = t.parent(p.edge);
        p.edge = u;
        p.offset = (u == 0) ? 0.0 : t.length(u);
    }
    return p;
}

// Is u an ancestor of (or equal to) w in the skeleton? Parents precede
// children, so walking w upward terminates.
inline bool vertex_ancestor_or_eq(const FiniteRTree& t, int u, int w) {
    while (w > u) w = t.parent(w);
    return w == u;
}

} // namespace detail

inline double root_distance(const FiniteRTree& t, const PointRef& p0) {
    const PointRef p = detail::canonical(t, p0);
    if (p.is_root()) return 0.0;
    return t.depth(t.parent(p.edge)) + p.offset;
}

// Weak location ancestry: a lies on the closed geodesic from the root to b.
inline bool location_on_root_path(const FiniteRTree& t, const PointRef& a0, const PointRef& b0) {
    const PointRef a = detail::canonical(t, a0);
    const PointRef b = detail::canonical(t, b0);
    if (a.is_root()) return true;
    if (b.is_root()) return false;
    if (a.edge == b.edge) return a.offset <= b.offset;
    return detail::vertex_ancestor_or_eq(t, a.edge, t.parent(b.edge));
}

// Strict ancestry x < y of tree points: on the root path and not the same
// location. Structural on the skeleton, never a floating-point distance test;
// coincident points are never related.
inline bool location_strict_ancestor(const FiniteRTree& t, const PointRef& a, const PointRef& b) {
    const PointRef ca = detail::canonical(t, a);
    const PointRef cb = detail::canonical(t, b);
    if (ca.same_location(cb)) return false;
    return location_on_root_path(t, ca, cb);
}

inline double distance(const FiniteRTree& t, const PointRef& a0, const PointRef& b0) {
    const PointRef a = detail::canonical(t, a0);
    const PointRef b = detail::canonical(t, b0);
    if (a.same_location(b)) return 0.0;
    const double da = root_distance(t, a);
    const double db = root_distance(t, b);
    double dmeet = 0.0;
    if (location_on_root_path(t, a, b)) {
        dmeet = da;
    } else if (location_on_root_path(t, b, a)) {
        dmeet = db;
    } else if (a.edge == b.edge) {
        dmeet = t.depth(t.parent(a.edge)) + std::min(a.offset, b.offset);
    } else {
        // deepest common skeleton vertex of the two host edges
        int u = a.edge;
        int w = b.edge;
        while (u != w) {
            if (u > w)
                u = t.parent(u);
            else
                w = t.parent(w);
        }
        // u is a common skeleton ancestor; the meet is u itself unless one
        // edge hangs below it on the path of the other (handled above).
        dmeet = t.depth(u);
    }
    return da + db - 2.0 * dmeet;
}

// ---------------------------------------------------------------------------
// Embedding and rescaling
// ---------------------------------------------------------------------------

// Unit-length embedding of a discrete tree: every edge becomes a segment of
// length 1 and mu is the bare length measure.
inline FiniteRTree unit_embedding(const DiscreteTree& tree) {
    FiniteRTree out;
    for (int v = 1; v < tree.size(); ++v) out.add_edge(tree.parent(v), 1.0);
    return out;
}

// Homothety: metric and measure both scaled by x (> 0). Densities are per
// unit length and stay put; lengths, atom masses and offsets scale.
inline FiniteRTree scale_by(const FiniteRTree& t, double x) {
    if (!(x > 0.0)) throw std::invalid_argument("scale_by: factor must be > 0");
    FiniteRTree out;
    for (int v = 1; v < t.vertex_count(); ++v) {
        out.add_edge(t.parent(v), x * t.length(v), t.density(v));
        for (const auto& a : t.atoms(v)) out.add_atom(v, x * a.offset, x * a.mass);
    }
    out.set_root_atom(x * t.root_atom());
    return out;
}

inline void check_rescale_params(double p, double q) {
    if (!(p > 0.0) || p > 1.0 || !(q > 0.0) || q > 1.0)
        throw std::invalid_argument("rescale: p and q must lie in (0,1]");
}

// Exact-spine rescaling of a finite tree. A finite tree has Spine = {root},
// so every edge is off-spine: distances scale by p and the excess by p.
inline FiniteRTree rescale(const FiniteRTree& t, double p, double q) {
    check_rescale_params(p, q);
    return scale_by(t, p);
}

// Horizon rescaling: Spine_R consists of the points with a descendant at
// distance >= R of themselves. Edges crossing the Spine_R boundary are split;
// the spine part scales by q (density by p/q so the excess scales by p), the
// off-spine part by p.
inline FiniteRTree rescale_horizon(const FiniteRTree& t, double p, double q, double R) {
    check_rescale_params(p, q);
    if (!(R >= 0.0)) throw std::invalid_argument("rescale_horizon: R must be >= 0");
    const auto sub_h = t.subtree_heights();
    FiniteRTree out;
    std::vector<int> image(t.vertex_count());   // image of skeleton vertex v
    image[0] = 0;
    for (int v = 1; v < t.vertex_count(); ++v) {
        const double len = t.length(v);
        const double cut = len + sub_h[v] - R;   // spine part of this edge: offsets <= cut
        const int up = image[t.parent(v)];
        if (cut >= len) {
            image[v] = out.add_edge(up, q * len, t.density(v) * p / q);
            for (const auto& a : t.atoms(v)) out.add_atom(image[v], q * a.offset, p * a.mass);
        } else if (cut <= 0.0) {
            image[v] = out.add_edge(up, p * len, t.density(v));
            for (const auto& a : t.atoms(v)) out.add_atom(image[v], p * a.offset, p * a.mass);
        } else {
            const int mid = out.add_edge(up, q * cut, t.density(v) * p / q);
            image[v] = out.add_edge(mid, p * (len - cut), t.density(v));
            for (const auto& a : t.atoms(v)) {
                if (a.offset <= cut)
                    out.add_atom(mid, q * a.offset, p * a.mass);
                else
                    out.add_atom(image[v], p * (a.offset - cut), p * a.mass);
            }
        }
    }
    out.set_root_atom(p * t.root_atom());
    return out;
}

// ---------------------------------------------------------------------------
// Sampling and discretization
// ---------------------------------------------------------------------------

// One point distributed as mu / mu(T), with the origin flag indicating the
// length (S=0) or excess (S=1) component.
inline PointRef sample_point(const FiniteRTree& t, Rng& rng) {
    const double total = t.total_mass();
    if (!(total > 0.0)) throw std::invalid_argument("sample_point: zero-mass tree");
    double target = rng.uniform() * total;
    for (int v = 1; v < t.vertex_count(); ++v) {
        const double len = t.length(v);
        if (target < len) return detail::canonical(t, PointRef{v, target, 0});
        target -= len;
        const double ex = len * t.density(v);
        if (target < ex)
            return detail::canonical(t, PointRef{v, len == 0.0 ? 0.0 : target / t.density(v), 1});
        target -= ex;
        for (const auto& a : t.atoms(v)) {
            if (target < a.mass) return detail::canonical(t, PointRef{v, a.offset, 1});
            target -= a.mass;
        }
    }
    return PointRef{0, 0.0, 1};   // root atom (or the numerical tail of the walk)
}

// Discretization from given point sets. V0 points may be ancestors, V1 points
// are always leaves; the parent of a point w is the element of V0 u {root}
// strictly closest to w on the root geodesic. Coincident points end up as
// siblings.
struct DiscretizedTree {
    DiscreteTree tree;
    std::vector<std::uint8_t> from_v1;   // flag per output vertex (root = 0)
};

inline DiscretizedTree discretize_given(const FiniteRTree& t, const std::vector<PointRef>& v0,
                                        const std::vector<PointRef>& v1) {
    struct Item {
        double offset;
        int which;   // 0 = V0, 1 = V1
        int idx;     // original list position, deterministic tie-break
    };
    std::vector<std::vector<Item>> bucket(t.vertex_count());
    std::vector<Item> at_root;
    auto place = [&](const std::vector<PointRef>& pts, int which) {
        for (int i = 0; i < static_cast<int>(pts.size()); ++i) {
            const PointRef p = detail::canonical(t, pts[i]);
            if (p.is_root())
                at_root.push_back(Item{0.0, which, i});
            else
                bucket[p.edge].push_back(Item{p.offset, which, i});
        }
    };
    place(v0, 0);
    place(v1, 1);

    DiscretizedTree out;
    auto emit = [&](int parent, const Item& it) {
        const int v = out.tree.add_child(parent);
        out.from_v1.push_back(static_cast<std::uint8_t>(it.which));
        return v;
    };
    out.from_v1.push_back(0);   // root

    // Points coincident with the root are children of the root; a V0 point
    // there never outranks the root itself (equal depth).
    std::sort(at_root.begin(), at_root.end(), [](const Item& a, const Item& b) {
        return std::tie(a.which, a.idx) < std::tie(b.which, b.idx);
    });
    for (const auto& it : at_root) emit(DiscreteTree::root(), it);

    // Deepest V0-or-root output vertex at or above each skeleton vertex.
    std::vector<int> anchor(t.vertex_count(), DiscreteTree::root());
    for (int e = 1; e < t.vertex_count(); ++e) {
        auto& items = bucket[e];
        std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
            return std::tie(a.offset, a.which, a.idx) < std::tie(b.offset, b.which, b.idx);
        });
        int cur = anchor[t.parent(e)];
        std::size_t i = 0;
        while (i < items.size()) {
            std::size_t j = i;
            int new_anchor = -1;
            while (j < items.size() && items[j].offset == items[i].offset) {
                const int v = emit(cur, items[j]);
                if (items[j].which == 0 && new_anchor < 0) new_anchor = v;
                ++j;
            }
            if (new_anchor >= 0) cur = new_anchor;
            i = j;
        }
        anchor[e] = cur;
    }
    return out;
}

// Poisson discretization: V0 ~ PPP(l), V1 ~ PPP(mu - l).
struct PoissonPoints {
    std::vector<PointRef> v0;
    std::vector<PointRef> v1;
};

inline PoissonPoints sample_poisson_points(const FiniteRTree& t, Rng& rng) {
    PoissonPoints pts;
    for (int v = 1; v < t.vertex_count(); ++v) {
        const double len = t.length(v);
        const long k0 = rng.poisson(len);
        for (long i = 0; i < k0; ++i) pts.v0.push_back(PointRef{v, rng.uniform() * len, 0});
        const long k1 = rng.poisson(len * t.density(v));
        for (long i = 0; i < k1; ++i) pts.v1.push_back(PointRef{v, rng.uniform() * len, 1});
        for (const auto& a : t.atoms(v)) {
            const long ka = rng.poisson(a.mass);
            for (long i = 0; i < ka; ++i) pts.v1.push_back(PointRef{v, a.offset, 1});
        }
    }
    const long kr = rng.poisson(t.root_atom());
    for (long i = 0; i < kr; ++i) pts.v1.push_back(PointRef{0, 0.0, 1});
    return pts;
}

inline DiscreteTree discretize(const FiniteRTree& t, Rng& rng) {
    const PoissonPoints pts = sample_poisson_points(t, rng);
    return discretize_given(t, pts.v0, pts.v1).tree;
}

// Discretization conditioned on having n+1 vertices, by rejection on the
// Poisson count (given the count, point positions are iid mu-samples, so
// only the count needs resampling). Reports the attempt count.
struct ConditionedDiscretization {
    DiscreteTree tree;
    long attempts = 0;
};

inline ConditionedDiscretization discretize_conditioned(const FiniteRTree& t, int n, Rng& rng,
                                                        long attempt_cap = 10000000L) {
    const double total = t.total_mass();
    if (!(total > 0.0))
        throw std::invalid_argument("discretize_conditioned: tree must carry mass");
    if (n < 0) throw std::invalid_argument("discretize_conditioned: negative count");
    long attempts = 0;
    while (true) {
        ++attempts;
        if (attempts > attempt_cap)
            throw std::runtime_error("discretize_conditioned: attempt cap exceeded");
        if (rng.poisson(total) == n) break;
    }
    std::vector<PointRef> v0, v1;
    for (int i = 0; i < n; ++i) {
        const PointRef p = sample_point(t, rng);
        (p.origin == 0 ? v0 : v1).push_back(p);
    }
    return ConditionedDiscretization{discretize_given(t, v0, v1).tree, attempts};
}

// ---------------------------------------------------------------------------
// Distance matrices and the sampled ancestry relation
// ---------------------------------------------------------------------------

struct DistanceMatrix {
    int n = 0;                // non-root sample count; matrix is (n+1) x (n+1)
    std::vector<double> d;    // row-major

    double at(int i, int j) const { return d[static_cast<std::size_t>(i) * (n + 1) + j]; }
};

inline void require_probability_mass(const FiniteRTree& t) {
    if (std::fabs(t.total_mass() - 1.0) > 1e-9)
        throw std::invalid_argument("tree must carry total mass 1");
}

inline DistanceMatrix sample_distance_matrix(const FiniteRTree& t, int n, Rng& rng) {
    require_probability_mass(t);
    std::vector<PointRef> pts(static_cast<std::size_t>(n) + 1);
    pts[0] = PointRef{0, 0.0, 0};
    for (int i = 1; i <= n; ++i) pts[i] = sample_point(t, rng);
    DistanceMatrix m;
    m.n = n;
    m.d.assign(static_cast<std::size_t>(n + 1) * (n + 1), 0.0);
    for (int i = 0; i <= n; ++i)
        for (int j = i + 1; j <= n; ++j) {
            const double dij = distance(t, pts[i], pts[j]);
            m.d[static_cast<std::size_t>(i) * (n + 1) + j] = dij;
            m.d[static_cast<std::size_t>(j) * (n + 1) + i] = dij;
        }
    return m;
}

// Shared sample (X_i, S_i), i = 0..n with (X_0,S_0) = (root,0), exposing the
// relation  i < j  iff  X_i strictly precedes X_j and S_i = 0, together with
// the distances of the same points.
class AncestrySample {
public:
    AncestrySample(const FiniteRTree& t, int n, Rng& rng) : tree_(&t) {
        require_probability_mass(t);
        points_.resize(static_cast<std::size_t>(n) + 1);
        points_[0] = PointRef{0, 0.0, 0};
        for (int i = 1; i <= n; ++i) points_[i] = sample_point(t, rng);
    }

    int n() const { return static_cast<int>(points_.size()) - 1; }
    int s_flag(int i) const { return points_[static_cast<std::size_t>(i)].origin; }
    const PointRef& point(int i) const { return points_[static_cast<std::size_t>(i)]; }

    bool rel(int i, int j) const {
        const auto& a = points_[static_cast<std::size_t>(i)];
        const auto& b = points_[static_cast<std::size_t>(j)];
        return a.origin == 0 && location_strict_ancestor(*tree_, a, b);
    }

    double dist(int i, int j) const {
        return distance(*tree_, points_[static_cast<std::size_t>(i)],
                        points_[static_cast<std::size_t>(j)]);
    }

private:
    const FiniteRTree* tree_;
    std::vector<PointRef> points_;
};

// de Finetti estimator of d(X_i, X_j) from the sampled relation alone:
// the fraction of k with k < exactly one of i, j.
inline double distance_from_ancestry(const AncestrySample& s, int i, int j) {
    const int n = s.n();
    if (i < 0 || i > n || j < 0 || j > n)
        throw std::invalid_argument("distance_from_ancestry: index out of range");
    if (n == 0) return 0.0;
    long count = 0;
    for (int k = 1; k <= n; ++k) {
        if (k == i || k == j) continue;
        if (s.rel(k, i) != s.rel(k, j)) ++count;
    }
    return static_cast<double>(count) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Truncation
// ---------------------------------------------------------------------------

// Restriction to the closed metric ball of radius r: crossing edges are
// clipped (keeping their density), atoms beyond the ball are dropped.
inline FiniteRTree truncate_radius(const FiniteRTree& t, double r) {
    if (!(r >= 0.0)) throw std::invalid_argument("truncate_radius: negative radius");
    FiniteRTree out;
    out.set_root_atom(t.root_atom());
    std::vector<int> image(t.vertex_count(), -1);
    std::vector<double> depth(t.vertex_count(), 0.0);
    image[0] = 0;
    for (int v = 1; v < t.vertex_count(); ++v) {
        const int u = t.parent(v);
        if (image[u] < 0) continue;   // parent already outside the ball
        depth[v] = depth[u] + t.length(v);
        const double room = r - depth[u];
        const double keep = std::min(t.length(v), room);
        if (keep < t.length(v) && keep <= 0.0) continue;
        const int nv = out.add_edge(image[u], keep, t.density(v));
        if (keep >= t.length(v)) image[v] = nv;
        for (const auto& a : t.atoms(v))
            if (a.offset <= keep) out.add_atom(nv, a.offset, a.mass);
    }
    return out;
}

} // namespace treesim
