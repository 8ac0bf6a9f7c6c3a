#include "ppc/rope.hpp"

#include <doctest.h>

#include <cmath>

using namespace ppc;
using namespace ppc::rope;
using ppc::seq::PositionId;

namespace {

Matd random_rows(int n, int d, Rng& rng) {
    Matd m(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) m(i, j) = rng.gaussian();
    return m;
}

}  // namespace

TEST_CASE("frequency ladders match theta_k = base^(-2k/d_axis)") {
    RopeTables t = build_rope_tables(16, {4, 6, 6});
    REQUIRE(t.tau_freqs.size() == 2);
    REQUIRE(t.x_freqs.size() == 3);
    CHECK(t.tau_freqs(0) == 1.0);
    CHECK(t.tau_freqs(1) == doctest::Approx(0.01).epsilon(1e-14));
    CHECK(t.x_freqs(0) == 1.0);
    CHECK(t.x_freqs(1) == doctest::Approx(0.046415888336127795).epsilon(1e-14));
    CHECK(t.x_freqs(2) == doctest::Approx(0.0021544346900318843).epsilon(1e-14));
    CHECK(t.y_freqs == t.x_freqs);
}

TEST_CASE("invalid splits are rejected with the documented code") {
    CHECK_THROWS_WITH_AS(build_rope_tables(16, {4, 6, 4}), doctest::Contains("invalid-split"),
                         Error);
    CHECK_THROWS_WITH_AS(build_rope_tables(16, {3, 7, 6}), doctest::Contains("invalid-split"),
                         Error);
    CHECK_THROWS_WITH_AS(build_rope_tables(16, {-2, 12, 6}),
                         doctest::Contains("invalid-split"), Error);
    CHECK_THROWS_WITH_AS(build_rope_tables(16, {4, 6, 6}, 0.5),
                         doctest::Contains("invalid-split"), Error);
}

TEST_CASE("rotation of a known vector matches the reference values") {
    RopeTables t = build_rope_tables(16, {4, 6, 6});
    Matd v = Matd::Ones(1, 16);
    Matd out = apply_rope(v, {PositionId{2, 3, 5}}, t);
    // independently computed pairwise rotations
    const double expect[16] = {
        -1.325444263372824, 0.4931505902785393,  0.9798013399732447, 1.019798673359911,
        -1.1311125046603125, -0.8488724885405782, 0.8515225980556245, 1.1291188002157255,
        0.9935158538527712,  1.0064423719931506,  1.2425864601263648, -0.6752620891999122,
        0.7431885126137531,  1.2031919359432879,  0.9891700155825935, 1.0107139458186631};
    for (int i = 0; i < 16; ++i) CHECK(out(0, i) == doctest::Approx(expect[i]).epsilon(1e-13));
}

TEST_CASE("zero position is the identity; rotation preserves norms") {
    RopeTables t = build_rope_tables(16, {4, 6, 6});
    Rng rng(4);
    Matd v = random_rows(5, 16, rng);
    std::vector<PositionId> zero(5, PositionId{0, 0, 0});
    CHECK((apply_rope(v, zero, t) - v).cwiseAbs().maxCoeff() == 0.0);

    std::vector<PositionId> pos;
    for (int i = 0; i < 5; ++i) pos.push_back({i, 2 * i, 7 - i});
    Matd rot = apply_rope(v, pos, t);
    for (int i = 0; i < 5; ++i)
        CHECK(rot.row(i).norm() == doctest::Approx(v.row(i).norm()).epsilon(1e-12));
}

TEST_CASE("relative-shift property per axis: <R(p)q, R(k)v> depends on p - k") {
    // 100 random (q, k, delta) triples per axis, 1e-9 tolerance
    RopeTables t = build_rope_tables(16, {4, 6, 6});
    Rng rng(9);
    for (int axis = 0; axis < 3; ++axis) {
        for (int trial = 0; trial < 100; ++trial) {
            Matd q = random_rows(1, 16, rng), k = random_rows(1, 16, rng);
            int a = rng.uniform_int(0, 7), b = rng.uniform_int(0, 7);
            int delta = rng.uniform_int(1, 5);
            auto at = [&](int c) {
                PositionId p{0, 0, 0};
                if (axis == 0) p.tau = c;
                if (axis == 1) p.x = c;
                if (axis == 2) p.y = c;
                return p;
            };
            double dot0 = (apply_rope(q, {at(a)}, t) * apply_rope(k, {at(b)}, t).transpose())(0, 0);
            double dot1 = (apply_rope(q, {at(a + delta)}, t) *
                           apply_rope(k, {at(b + delta)}, t).transpose())(0, 0);
            CHECK(std::abs(dot0 - dot1) <= 1e-9);
        }
    }
}

TEST_CASE("cache path equals the convenience op and inverts exactly") {
    RopeTables t = build_rope_tables(32, {8, 12, 12});
    Rng rng(17);
    std::vector<PositionId> pos;
    for (int i = 0; i < 7; ++i)
        pos.push_back({rng.uniform_int(0, 4), rng.uniform_int(0, 9), rng.uniform_int(0, 9)});
    Matd v = random_rows(7, 32, rng);

    RopeCache cache = build_rope_cache(pos, t);
    Matd a = v;
    apply_rope_cached<double>(a, cache);
    CHECK((a - apply_rope(v, pos, t)).cwiseAbs().maxCoeff() == 0.0);

    apply_rope_cached<double>(a, cache, -1.0);  // inverse rotation
    CHECK((a - v).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("shape guards on the cached path") {
    RopeTables t = build_rope_tables(16, {4, 6, 6});
    RopeCache cache = build_rope_cache({PositionId{1, 1, 1}}, t);
    Matd bad = Matd::Zero(1, 12);
    CHECK_THROWS_AS(apply_rope_cached<double>(bad, cache), Error);
    Matd bad2 = Matd::Zero(2, 16);
    CHECK_THROWS_AS(apply_rope_cached<double>(bad2, cache), Error);
}
