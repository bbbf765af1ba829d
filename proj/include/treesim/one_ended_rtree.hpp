#pragma once

#include <algorithm>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

#include "treesim/mass_path.hpp"
#include "treesim/one_ended_tree.hpp"
#include "treesim/rtree.hpp"

namespace treesim {

// One spine piece of a one-ended measured R-tree: a stretch of spine carrying
// a constant excess density, point masses, and finite subtrees grafted at
// interior offsets (offsets live in [0, length)).
struct RSegment {
    double length = 0.0;
    double density = 0.0;
    std::vector<RAtom> atoms;
    std::vector<std::pair<double, FiniteRTree>> attachments;
};

// One-ended measured R-tree: an infinite spine ray produced as a lazy,
// memoizing stream of segments. Generators emit fixed-length segments, so the
// cumulative spine length diverges; mu restricted to any ball is finite.
class OneEndedRTree {
public:
    explicit OneEndedRTree(std::function<RSegment()> producer)
        : stream_(std::make_shared<Stream>()) {
        stream_->next = std::move(producer);
    }

    static OneEndedRTree bare_ray(double density = 0.0) {
        return OneEndedRTree([density] { return RSegment{1.0, density, {}, {}}; });
    }

    // The memo is a deque, so returned references stay valid across later
    // pulls for as long as a copy of this value is alive.
    const RSegment& segment(int k) const {
        if (k < 0) throw std::invalid_argument("segment: negative index");
        std::lock_guard<std::mutex> lock(stream_->mutex);
        while (static_cast<int>(stream_->memo.size()) <= k) {
            RSegment s = stream_->next();
            if (!(s.length > 0.0))
                throw std::runtime_error("OneEndedRTree: segments must have positive length");
            stream_->memo.push_back(std::move(s));
        }
        return stream_->memo[static_cast<std::size_t>(k)];
    }

private:
    struct Stream {
        std::mutex mutex;
        std::deque<RSegment> memo;
        std::function<RSegment()> next;
    };
    std::shared_ptr<Stream> stream_;
};

// Unit-length embedding of a one-ended discrete tree: spine edges become unit
// segments and decoration k is grafted at spine distance k.
inline OneEndedRTree unit_embedding(const OneEndedTree& tree) {
    auto cursor = std::make_shared<int>(0);
    return OneEndedRTree([tree, cursor]() {
        const DiscreteTree dec = tree.decoration((*cursor)++);
        RSegment seg{1.0, 0.0, {}, {}};
        if (dec.size() > 1) seg.attachments.emplace_back(0.0, unit_embedding(dec));
        return seg;
    });
}

// Exact-spine rescaling of a one-ended tree: spine lengths scale by q,
// attached subtrees by p (metric and mass), and the spine excess by p, which
// turns a spine density into density * p/q.
inline OneEndedRTree rescale(const OneEndedRTree& tree, double p, double q) {
    check_rescale_params(p, q);
    auto cursor = std::make_shared<int>(0);
    return OneEndedRTree([tree, p, q, cursor]() {
        const RSegment& in = tree.segment((*cursor)++);
        RSegment out;
        out.length = q * in.length;
        out.density = in.density * p / q;
        out.atoms.reserve(in.atoms.size());
        for (const auto& a : in.atoms) out.atoms.push_back(RAtom{q * a.offset, p * a.mass});
        out.attachments.reserve(in.attachments.size());
        for (const auto& [off, sub] : in.attachments)
            out.attachments.emplace_back(q * off, scale_by(sub, p));
        return out;
    });
}

// Spine shift by t: re-roots at the spine point at distance t. Everything
// strictly below t is dropped; an attachment or atom exactly at t lands at
// the new root (offset 0).
inline OneEndedRTree shift_spine(const OneEndedRTree& tree, double t) {
    if (!(t >= 0.0)) throw std::invalid_argument("shift_spine: negative shift");
    struct State {
        OneEndedRTree input;
        double skip;
        int cursor = 0;
        bool first = true;
    };
    auto st = std::make_shared<State>(State{tree, t});
    return OneEndedRTree([st]() {
        if (!st->first) return st->input.segment(st->cursor++);
        // Locate the segment containing t; boundary hits move to the next
        // segment so the emitted piece always has positive length.
        double rem = st->skip;
        while (rem >= st->input.segment(st->cursor).length) {
            rem -= st->input.segment(st->cursor).length;
            ++st->cursor;
        }
        const RSegment& seg = st->input.segment(st->cursor++);
        st->first = false;
        if (rem == 0.0) return seg;
        RSegment out;
        out.length = seg.length - rem;
        out.density = seg.density;
        for (const auto& a : seg.atoms)
            if (a.offset >= rem) out.atoms.push_back(RAtom{a.offset - rem, a.mass});
        for (const auto& [off, sub] : seg.attachments)
            if (off >= rem) out.attachments.emplace_back(off - rem, sub);
        return out;
    });
}

namespace detail {

// Builds the finite spine prefix [0, cut] (closed) or [0, cut) (open) of a
// one-ended tree as a chain with vertices at the attachment positions;
// transform(sub, residual) produces the copy grafted at each attachment.
inline FiniteRTree spine_prefix(
    const OneEndedRTree& tree, double cut, bool closed,
    const std::function<FiniteRTree(const FiniteRTree&, double)>& transform) {
    FiniteRTree out;
    double root_mass = 0.0;
    int tip = 0;           // current spine chain vertex
    double tip_pos = 0.0;  // its global position
    const auto keep = [&](double pos) { return closed ? pos <= cut : pos < cut; };

    const auto place_atom = [&](double pos, double mass) {
        // pos <= tip_pos: the atom sits on the chain built so far.
        if (tip == 0)
            root_mass += mass;
        else
            out.add_atom(tip, out.length(tip) - (tip_pos - pos), mass);
    };

    const auto graft = [&](int at, const FiniteRTree& sub) {
        std::vector<int> map(static_cast<std::size_t>(sub.vertex_count()));
        map[0] = at;
        for (int v = 1; v < sub.vertex_count(); ++v) {
            map[v] = out.add_edge(map[sub.parent(v)], sub.length(v), sub.density(v));
            for (const auto& a : sub.atoms(v)) out.add_atom(map[v], a.offset, a.mass);
        }
        if (sub.root_atom() > 0.0) {
            if (at == 0)
                root_mass += sub.root_atom();
            else
                out.add_atom(at, out.length(at), sub.root_atom());
        }
    };

    double seg_start = 0.0;
    int k = 0;
    while (seg_start < cut || (closed && seg_start == cut)) {
        const RSegment& seg = tree.segment(k++);
        const double seg_end = seg_start + seg.length;
        const double piece_end = std::min(seg_end, cut);

        struct Ev {
            double pos;
            int kind;   // attachments first at equal positions
            std::size_t idx;
        };
        std::vector<Ev> events;
        for (std::size_t i = 0; i < seg.attachments.size(); ++i) {
            const double pos = seg_start + seg.attachments[i].first;
            if (keep(pos)) events.push_back(Ev{pos, 0, i});
        }
        for (std::size_t i = 0; i < seg.atoms.size(); ++i) {
            const double pos = seg_start + seg.atoms[i].offset;
            if (keep(pos)) events.push_back(Ev{pos, 1, i});
        }
        std::sort(events.begin(), events.end(), [](const Ev& a, const Ev& b) {
            return std::tie(a.pos, a.kind, a.idx) < std::tie(b.pos, b.kind, b.idx);
        });

        const auto extend_to = [&](double pos) {
            if (pos > tip_pos) {
                tip = out.add_edge(tip, pos - tip_pos, seg.density);
                tip_pos = pos;
            }
        };
        // Pending atoms are flushed onto the chain edge that covers them once
        // it exists (atoms never force a chain vertex of their own).
        std::vector<RAtom> pending;
        const auto flush_pending = [&]() {
            for (const auto& a : pending) place_atom(a.offset, a.mass);
            pending.clear();
        };
        for (const auto& ev : events) {
            if (ev.kind == 1) {
                if (ev.pos <= tip_pos)
                    place_atom(ev.pos, seg.atoms[ev.idx].mass);
                else
                    pending.push_back(RAtom{ev.pos, seg.atoms[ev.idx].mass});
            } else {
                const auto& [off, sub] = seg.attachments[ev.idx];
                extend_to(ev.pos);
                flush_pending();
                graft(tip, transform(sub, cut - ev.pos));
            }
        }
        extend_to(piece_end);
        flush_pending();
        seg_start = seg_end;
        if (seg_end > cut || (!closed && seg_end == cut)) break;
    }
    out.set_root_atom(root_mass);
    return out;
}

} // namespace detail

// Spine pruning: cut at the first atom of a rate-lambda Poisson process along
// the spine (height ~ Exp(lambda)) and keep the root component. Attachments
// strictly below the cut survive whole.
inline FiniteRTree prune_spine(const OneEndedRTree& tree, double lambda, Rng& rng) {
    if (!(lambda > 0.0)) throw std::invalid_argument("prune_spine: lambda must be > 0");
    const double cut = rng.exponential(lambda);
    return detail::spine_prefix(tree, cut, /*closed=*/false,
                                [](const FiniteRTree& sub, double) { return sub; });
}

// Restriction to the closed ball of radius r.
inline FiniteRTree truncate_radius(const OneEndedRTree& tree, double r) {
    if (!(r >= 0.0)) throw std::invalid_argument("truncate_radius: negative radius");
    return detail::spine_prefix(tree, r, /*closed=*/true,
                                [](const FiniteRTree& sub, double residual) {
                                    return truncate_radius(sub, residual);
                                });
}

// Mass process X(t) = mu(V_t) - t for t <= horizon, where V_t collects the
// points whose spine projection is at most t. Continuous slope = spine excess
// density; every attachment and spine atom is a jump.
inline MassPath mass_process(const OneEndedRTree& tree, double horizon) {
    if (!(horizon > 0.0)) throw std::invalid_argument("mass_process: horizon must be > 0");
    std::vector<MassPath::SlopePiece> slopes;
    std::vector<MassPath::Jump> jumps;
    double seg_start = 0.0;
    for (int k = 0; seg_start < horizon; ++k) {
        const RSegment& seg = tree.segment(k);
        const double seg_end = seg_start + seg.length;
        const double piece_end = std::min(seg_end, horizon);
        if (seg.density > 0.0)
            slopes.push_back(MassPath::SlopePiece{seg_start, piece_end, seg.density});
        for (const auto& a : seg.atoms) {
            const double pos = seg_start + a.offset;
            if (pos <= horizon && a.mass > 0.0) jumps.push_back(MassPath::Jump{pos, a.mass});
        }
        for (const auto& [off, sub] : seg.attachments) {
            const double pos = seg_start + off;
            const double m = sub.total_mass();
            if (pos <= horizon && m > 0.0) jumps.push_back(MassPath::Jump{pos, m});
        }
        seg_start = seg_end;
    }
    return MassPath(std::move(slopes), std::move(jumps), horizon);
}

// Poisson discretization of a one-ended tree, emitted lazily: output spine
// vertices are the spine points of a unit-rate Poisson process (plus the
// root), and output decoration k gathers everything sampled on the spine
// interval between consecutive spine points.
inline OneEndedTree discretize(const OneEndedRTree& tree, Rng rng) {
    struct State {
        OneEndedRTree input;
        Rng rng;
        int seg = 0;
        double local = 0.0;   // position within current segment
    };
    auto st = std::make_shared<State>(State{tree, rng});
    return OneEndedTree([st]() {
        DiscreteTree dec;
        double remaining = st->rng.exponential(1.0);   // gap to the next spine vertex
        while (true) {
            const RSegment& seg = st->input.segment(st->seg);
            const double avail = seg.length - st->local;
            const double take = std::min(avail, remaining);
            const double from = st->local;
            const double to = st->local + take;
            // spine excess density on [from, to)
            const long k1 = st->rng.poisson(seg.density * take);
            for (long i = 0; i < k1; ++i) dec.add_child(DiscreteTree::root());
            // spine atoms in [from, to)
            for (const auto& a : seg.atoms)
                if (a.offset >= from && a.offset < to) {
                    const long ka = st->rng.poisson(a.mass);
                    for (long i = 0; i < ka; ++i) dec.add_child(DiscreteTree::root());
                }
            // attachments in [from, to)
            for (const auto& [off, sub] : seg.attachments)
                if (off >= from && off < to)
                    dec.graft(DiscreteTree::root(), discretize(sub, st->rng));
            if (remaining < avail) {
                st->local += take;
                break;
            }
            remaining -= avail;
            st->local = 0.0;
            ++st->seg;
        }
        return dec;
    });
}

} // namespace treesim
