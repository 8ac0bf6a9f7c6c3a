#pragma once
// rope.hpp — 3-axis rotary position embedding over (tau, x, y).

#include "ppc/common.hpp"
#include "ppc/seq.hpp"

namespace ppc::rope {

struct RopeSplit {
    int tau = 8, x = 12, y = 12;
    int total() const { return tau + x + y; }
};

// Per-axis frequency ladders: theta_k = base^(-2k / d_axis), k < d_axis/2.
struct RopeTables {
    RopeSplit split;
    Vecd tau_freqs, x_freqs, y_freqs;
};

inline RopeTables build_rope_tables(int head_dim, RopeSplit split, double base = 10000.0) {
    require(split.tau >= 0 && split.x >= 0 && split.y >= 0, "invalid-split",
            "negative axis width");
    require(split.tau % 2 == 0 && split.x % 2 == 0 && split.y % 2 == 0, "invalid-split",
            "axis widths must be even (rotation pairs)");
    require(split.total() == head_dim, "invalid-split",
            "axis widths must sum to head_dim (" + std::to_string(split.total()) + " vs " +
                std::to_string(head_dim) + ")");
    require(base > 1.0, "invalid-split", "base must exceed 1");
    auto ladder = [&](int d_axis) {
        Vecd f(d_axis / 2);
        for (int k = 0; k < d_axis / 2; ++k)
            f(k) = std::pow(base, -2.0 * k / static_cast<double>(d_axis));
        return f;
    };
    RopeTables t;
    t.split = split;
    t.tau_freqs = ladder(split.tau);
    t.x_freqs = ladder(split.x);
    t.y_freqs = ladder(split.y);
    return t;
}

// Precomputed per-token cos/sin for every rotation pair; shared by all blocks,
// heads and the backward pass (which uses the inverse rotation).
struct RopeCache {
    Matd cosv, sinv;  // T x head_dim/2
};

inline RopeCache build_rope_cache(const std::vector<seq::PositionId>& pos,
                                  const RopeTables& t) {
    const int pairs = t.split.total() / 2;
    RopeCache c;
    c.cosv.resize(static_cast<Eigen::Index>(pos.size()), pairs);
    c.sinv.resize(static_cast<Eigen::Index>(pos.size()), pairs);
    for (size_t i = 0; i < pos.size(); ++i) {
        int k = 0;
        auto fill = [&](const Vecd& freqs, double coord) {
            for (int j = 0; j < freqs.size(); ++j, ++k) {
                double a = coord * freqs(j);
                c.cosv(static_cast<Eigen::Index>(i), k) = std::cos(a);
                c.sinv(static_cast<Eigen::Index>(i), k) = std::sin(a);
            }
        };
        fill(t.tau_freqs, pos[i].tau);
        fill(t.x_freqs, pos[i].x);
        fill(t.y_freqs, pos[i].y);
    }
    return c;
}

// In-place rotation of (2k, 2k+1) pairs; sign=-1 applies the inverse (used by
// the backward pass: rotations are orthogonal).
template <typename S>
void apply_rope_cached(Eigen::Ref<Mat<S>> v, const RopeCache& cache, S sign = S(1)) {
    require(v.cols() == cache.cosv.cols() * 2, "shape-mismatch",
            "vector width must be 2x rotation pairs");
    require(v.rows() == cache.cosv.rows(), "shape-mismatch", "token count mismatch");
    for (Eigen::Index i = 0; i < v.rows(); ++i)
        for (Eigen::Index k = 0; k < cache.cosv.cols(); ++k) {
            S c = static_cast<S>(cache.cosv(i, k));
            S s = sign * static_cast<S>(cache.sinv(i, k));
            S a = v(i, 2 * k), b = v(i, 2 * k + 1);
            v(i, 2 * k) = c * a - s * b;
            v(i, 2 * k + 1) = s * a + c * b;
        }
}

// convenience form matching the op-level contract
template <typename S>
Mat<S> apply_rope(const Mat<S>& v, const std::vector<seq::PositionId>& pos,
                  const RopeTables& t) {
    require(v.rows() == static_cast<Eigen::Index>(pos.size()), "shape-mismatch",
            "one position per row required");
    require(v.cols() == t.split.total(), "shape-mismatch", "row width must equal head_dim");
    Mat<S> out = v;
    RopeCache cache = build_rope_cache(pos, t);
    apply_rope_cached<S>(out, cache);
    return out;
}

}  // namespace ppc::rope
