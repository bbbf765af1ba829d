#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace treesim {

// Hurst exponent of the mass process attached to a (p,q)-self-similar tree.
inline double hurst_exponent(double p, double q) {
    if (!(p > 0.0) || p >= 1.0 || !(q > 0.0) || q >= 1.0)
        throw std::invalid_argument("hurst_exponent: p, q must lie in (0,1)");
    return std::log(p) / std::log(q);
}

// Nondecreasing cadlag path X on [0, horizon] with an explicit decomposition
// X = X_c + X_j: piecewise-constant slopes for the continuous part and a jump
// list for the jump part. X(0) = 0 unless mass hangs at the root, in which
// case a jump at time 0 carries it.
class MassPath {
public:
    struct SlopePiece {
        double t0 = 0.0;
        double t1 = 0.0;
        double slope = 0.0;   // >= 0
    };
    struct Jump {
        double t = 0.0;
        double size = 0.0;    // > 0
    };

    MassPath(std::vector<SlopePiece> slopes, std::vector<Jump> jumps, double horizon)
        : slopes_(std::move(slopes)), jumps_(std::move(jumps)), horizon_(horizon) {
        if (!(horizon >= 0.0)) throw std::invalid_argument("MassPath: negative horizon");
        for (const auto& s : slopes_)
            if (!(s.slope >= 0.0) || !(s.t1 >= s.t0))
                throw std::invalid_argument("MassPath: bad slope piece");
        for (const auto& j : jumps_)
            if (!(j.size > 0.0) || !(j.t >= 0.0))
                throw std::invalid_argument("MassPath: bad jump");
        std::sort(jumps_.begin(), jumps_.end(),
                  [](const Jump& a, const Jump& b) { return a.t < b.t; });
    }

    static MassPath pure_jump(std::vector<Jump> jumps, double horizon) {
        return MassPath({}, std::move(jumps), horizon);
    }

    double horizon() const { return horizon_; }
    const std::vector<SlopePiece>& slopes() const { return slopes_; }
    const std::vector<Jump>& jumps() const { return jumps_; }

    bool is_pure_jump() const {
        for (const auto& s : slopes_)
            if (s.slope > 0.0) return false;
        return true;
    }

    double continuous_at(double t) const {
        double x = 0.0;
        for (const auto& s : slopes_) {
            if (t <= s.t0) break;
            x += s.slope * (std::min(t, s.t1) - s.t0);
        }
        return x;
    }

    double jump_at(double t) const {
        double x = 0.0;
        for (const auto& j : jumps_) {
            if (j.t > t) break;
            x += j.size;
        }
        return x;
    }

    double at(double t) const { return continuous_at(t) + jump_at(t); }

private:
    std::vector<SlopePiece> slopes_;
    std::vector<Jump> jumps_;
    double horizon_;
};

} // namespace treesim
