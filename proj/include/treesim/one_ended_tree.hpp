#pragma once

#include <functional>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <utility>
#include <vector>

#include "treesim/discrete_tree.hpp"
#include "treesim/rng.hpp"

namespace treesim {

// One-ended tree: a single infinite spine with a finite decoration hanging at
// each spine vertex. Decoration k is rooted at spine vertex k and excludes the
// spine continuation edge.
//
// The stream is pull-based and memoizing: pulling decoration k forces and
// caches 0..k, so re-reads of a constructed value are identical. The memo is
// mutex-guarded so concurrent pulls are safe.
class OneEndedTree {
public:
    explicit OneEndedTree(std::function<DiscreteTree()> producer)
        : stream_(std::make_shared<Stream>()) {
        stream_->next = std::move(producer);
    }

    static OneEndedTree bare_ray() {
        return OneEndedTree([] { return DiscreteTree::single_vertex(); });
    }

    DiscreteTree decoration(int k) const {
        if (k < 0) throw std::invalid_argument("decoration: negative index");
        std::lock_guard<std::mutex> lock(stream_->mutex);
        while (static_cast<int>(stream_->memo.size()) <= k)
            stream_->memo.push_back(stream_->next());
        return stream_->memo[static_cast<std::size_t>(k)];
    }

private:
    struct Stream {
        std::mutex mutex;
        std::vector<DiscreteTree> memo;
        std::function<DiscreteTree()> next;
    };
    std::shared_ptr<Stream> stream_;
};

// Keep-probability regime of the random contraction: exact-spine applies q on
// the spine only; horizon(m) applies q to any vertex with a descendant at
// distance m of itself.
struct ContractionMode {
    bool use_horizon = false;
    int horizon = 0;

    static ContractionMode exact_spine() { return {}; }
    static ContractionMode with_horizon(int m) {
        if (m < 1) throw std::invalid_argument("horizon: m must be >= 1");
        return {true, m};
    }
};

namespace detail {

inline void check_pq(double p, double q) {
    if (!(p > 0.0) || p >= 1.0 || !(q > 0.0) || q >= 1.0)
        throw std::invalid_argument("random_contract: p and q must lie in (0,1)");
}

// Bernoulli mask over non-root vertices; horizon mode switches tall vertices
// to probability q.
inline KeepMask sample_mask(const DiscreteTree& t, double p, double q,
                            const ContractionMode& mode, Rng& rng) {
    KeepMask mask(t.size());
    std::vector<int> h;
    if (mode.use_horizon) h = t.heights();
    for (int v = 1; v < t.size(); ++v) {
        const double keep_prob = (mode.use_horizon && h[v] >= mode.horizon) ? q : p;
        if (rng.bernoulli(keep_prob)) mask.keep(v);
    }
    return mask;
}

} // namespace detail

// Random contraction of a finite tree. Finite trees have Spine = {root}, so
// exact-spine mode never applies q.
inline DiscreteTree random_contract(const DiscreteTree& tree, double p, double q,
                                    ContractionMode mode, Rng& rng) {
    detail::check_pq(p, q);
    return contract(tree, detail::sample_mask(tree, p, q, mode, rng));
}

inline DiscreteTree random_contract(const DiscreteTree& tree, double p, double q, Rng& rng) {
    return random_contract(tree, p, q, ContractionMode::exact_spine(), rng);
}

// Random contraction of a one-ended tree, produced lazily. Output decoration
// k merges the contracted decoration forests of every input spine vertex
// whose nearest kept spine ancestor is the k-th kept spine vertex; gaps
// between kept spine vertices are geometric with success q.
inline OneEndedTree random_contract(const OneEndedTree& tree, double p, double q,
                                    ContractionMode mode, Rng rng) {
    detail::check_pq(p, q);
    struct State {
        OneEndedTree input;
        double p, q;
        ContractionMode mode;
        Rng rng;
        int cursor = 0;   // next kept spine vertex of the input
    };
    auto st = std::make_shared<State>(State{tree, p, q, mode, rng});
    return OneEndedTree([st]() {
        auto contracted = [&](int s) {
            const DiscreteTree dec = st->input.decoration(s);
            return contract(dec, detail::sample_mask(dec, st->p, st->q, st->mode, st->rng));
        };
        DiscreteTree out = contracted(st->cursor);
        while (true) {
            ++st->cursor;
            if (st->rng.bernoulli(st->q)) break;   // spine vertices always carry q
            out.graft(DiscreteTree::root(), contracted(st->cursor));
        }
        return out;
    });
}

inline OneEndedTree random_contract(const OneEndedTree& tree, double p, double q, Rng rng) {
    return random_contract(tree, p, q, ContractionMode::exact_spine(), std::move(rng));
}

// Spine shift: drops decoration 0. The underlying stream is shared, so the
// shift is O(1) and consistent with the source value.
inline OneEndedTree theta_shift(const OneEndedTree& tree) {
    auto cursor = std::make_shared<int>(0);
    return OneEndedTree([tree, cursor]() { return tree.decoration(++*cursor); });
}

// Finite prefix: spine vertices 0..k with decorations truncated to the
// residual depth.
inline DiscreteTree truncate(const OneEndedTree& tree, int k) {
    if (k < 0) throw std::invalid_argument("truncate: negative depth");
    DiscreteTree out;
    int spine = DiscreteTree::root();
    for (int j = 0; j <= k; ++j) {
        if (j > 0) spine = out.add_child(spine);
        out.graft(spine, truncate(tree.decoration(j), k - j));
    }
    return out;
}

inline int reach_count(const OneEndedTree& tree, int r, int R) {
    if (r < 0 || r > R) throw std::invalid_argument("reach_count: need 0 <= r <= R");
    return reach_count(truncate(tree, R), r, R);
}

// Spine pruning: marks spine vertices 1,2,... independently with probability
// lambda/(1+lambda) and returns the root component, i.e. the spine prefix
// before the first mark together with its decorations.
inline DiscreteTree prune_spine(const OneEndedTree& tree, double lambda, Rng& rng) {
    if (!(lambda > 0.0)) throw std::invalid_argument("prune_spine: lambda must be > 0");
    const double mark = lambda / (1.0 + lambda);
    const long first_marked = 1 + rng.geometric(mark);
    DiscreteTree out;
    int spine = DiscreteTree::root();
    for (long j = 0; j < first_marked; ++j) {
        if (j > 0) spine = out.add_child(spine);
        out.graft(spine, tree.decoration(static_cast<int>(j)));
    }
    return out;
}

} // namespace treesim
