#include "ppc/tape.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

using namespace ppc;
using Tape = tape::Tape<double>;
using Var = Tape::Var;

namespace {

Matd randm(int r, int c, Rng& rng, double scale = 1.0) {
    Matd m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = scale * rng.gaussian();
    return m;
}

// Central finite differences on every input entry against the analytic
// backward pass. `build` must map leaves to a scalar var on the given tape.
double fd_check(std::vector<Matd> inputs,
                const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                double h = 1e-6) {
    auto eval = [&](const std::vector<Matd>& ins) {
        Tape tp(false);
        std::vector<Var> vars;
        for (const auto& m : ins) vars.push_back(tp.leaf(m, false));
        return tp.val(build(tp, vars))(0, 0);
    };

    Tape tp(true);
    std::vector<Var> vars;
    for (const auto& m : inputs) vars.push_back(tp.leaf(m, true));
    Var loss = build(tp, vars);
    tp.backward(loss);

    double worst = 0.0;
    for (size_t v = 0; v < inputs.size(); ++v) {
        const Matd& ga = tp.grad(vars[v]);
        for (int i = 0; i < inputs[v].rows(); ++i)
            for (int j = 0; j < inputs[v].cols(); ++j) {
                std::vector<Matd> plus = inputs, minus = inputs;
                plus[v](i, j) += h;
                minus[v](i, j) -= h;
                double fd = (eval(plus) - eval(minus)) / (2 * h);
                double rel = std::abs(ga(i, j) - fd) /
                             std::max({std::abs(ga(i, j)), std::abs(fd), 1e-6});
                worst = std::max(worst, rel);
            }
    }
    return worst;
}

}  // namespace

TEST_CASE("arithmetic ops backward against finite differences") {
    Rng rng(1);
    Matd a = randm(3, 4, rng), b = randm(3, 4, rng), tgt = randm(3, 4, rng);

    CHECK(fd_check({a, b}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.add(v[0], v[1]), tgt);
          }) < 1e-7);
    CHECK(fd_check({a, b}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.sub(v[0], v[1]), tgt);
          }) < 1e-7);
    CHECK(fd_check({a, b}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.cmul(v[0], v[1]), tgt);
          }) < 1e-6);
    CHECK(fd_check({a}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.scale(v[0], -1.7), tgt);
          }) < 1e-7);
    CHECK(fd_check({a}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.add_const(v[0], 0.4), tgt);
          }) < 1e-7);
    CHECK(fd_check({a, b}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.add_weighted(v[0], 0.3, v[1], -2.0), tgt);
          }) < 1e-7);
}

TEST_CASE("matmul and transpose backward") {
    Rng rng(2);
    Matd a = randm(3, 5, rng), b = randm(5, 2, rng), tgt = randm(3, 2, rng);
    CHECK(fd_check({a, b}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.matmul(v[0], v[1]), tgt);
          }) < 1e-6);
    Matd tgt2 = randm(5, 3, rng);
    CHECK(fd_check({a}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.transpose(v[0]), tgt2);
          }) < 1e-7);

    Tape tp;
    CHECK_THROWS_AS(tp.matmul(tp.leaf(a, false), tp.leaf(a, false)), Error);
}

TEST_CASE("slicing and concatenation backward") {
    Rng rng(3);
    Matd a = randm(6, 4, rng), b = randm(2, 4, rng), c = randm(6, 3, rng);

    CHECK(fd_check({a}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.slice_rows(v[0], 1, 3), Matd::Zero(3, 4));
          }) < 1e-6);
    CHECK(fd_check({a}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.slice_cols(v[0], 1, 2), Matd::Zero(6, 2));
          }) < 1e-6);
    CHECK(fd_check({a, b}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.concat_rows({v[0], v[1]}), Matd::Zero(8, 4));
          }) < 1e-6);
    CHECK(fd_check({a, c}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.concat_cols({v[0], v[1]}), Matd::Zero(6, 7));
          }) < 1e-6);
    // a var consumed twice through different slices must accumulate
    CHECK(fd_check({a}, [&](Tape& t, const std::vector<Var>& v) {
              Var s1 = t.slice_rows(v[0], 0, 4);
              Var s2 = t.slice_rows(v[0], 2, 4);  // overlapping
              return t.mse(t.add(s1, s2), Matd::Zero(4, 4));
          }) < 1e-6);

    Tape tp;
    Var va = tp.leaf(a, false);
    CHECK_THROWS_AS(tp.slice_rows(va, 4, 4), Error);
    CHECK_THROWS_AS(tp.slice_cols(va, 3, 2), Error);
}

TEST_CASE("softmax rows: sums to one, matches FD") {
    Rng rng(4);
    Matd a = randm(4, 7, rng, 2.0), w = randm(4, 7, rng);
    Tape tp(false);
    Matd y = tp.val(tp.softmax_rows(tp.leaf(a, false)));
    for (int r = 0; r < 4; ++r) CHECK(y.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y.minCoeff() > 0.0);
    // large logits stay finite (max-subtraction)
    Tape tp2(false);
    Matd big = Matd::Constant(1, 3, 1e4);
    big(0, 1) = 1e4 + 1;
    CHECK(tp2.val(tp2.softmax_rows(tp2.leaf(big, false))).allFinite());

    CHECK(fd_check({a}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.cmul(t.softmax_rows(v[0]), t.constant(w)), Matd::Zero(4, 7));
          }) < 1e-6);
}

TEST_CASE("layernorm rows: zero mean, unit variance, matches FD") {
    Rng rng(5);
    Matd a = randm(3, 8, rng, 3.0), w = randm(3, 8, rng);
    Tape tp(false);
    Matd y = tp.val(tp.layernorm_rows(tp.leaf(a, false), 1e-6));
    for (int r = 0; r < 3; ++r) {
        CHECK(y.row(r).mean() == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(y.row(r).squaredNorm() / 8 == doctest::Approx(1.0).epsilon(1e-5));
    }
    CHECK(fd_check({a}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.cmul(t.layernorm_rows(v[0], 1e-6), t.constant(w)),
                           Matd::Zero(3, 8));
          }) < 1e-5);
}

TEST_CASE("silu and gelu: reference values and FD") {
    Tape tp(false);
    Matd x(1, 2);
    x << 0.7, -1.3;
    Matd gelu = tp.val(tp.gelu(tp.leaf(x, false)));
    CHECK(gelu(0, 0) == doctest::Approx(0.5306254434438489).epsilon(1e-14));
    CHECK(gelu(0, 1) == doctest::Approx(-0.12584062996129347).epsilon(1e-14));
    Matd silu = tp.val(tp.silu(tp.leaf(x, false)));
    CHECK(silu(0, 0) == doctest::Approx(0.7 / (1 + std::exp(-0.7))).epsilon(1e-14));

    Rng rng(6);
    Matd a = randm(3, 5, rng), tgt = randm(3, 5, rng);
    CHECK(fd_check({a}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.silu(v[0]), tgt);
          }) < 1e-6);
    CHECK(fd_check({a}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.gelu(v[0]), tgt);
          }) < 1e-6);
}

TEST_CASE("rope op: forward equals the cached rotation, backward matches FD") {
    rope::RopeTables tables = rope::build_rope_tables(8, {4, 2, 2});
    std::vector<seq::PositionId> pos = {{0, 0, 0}, {1, 2, 3}, {2, 5, 1}};
    rope::RopeCache cache = rope::build_rope_cache(pos, tables);
    Rng rng(7);
    Matd a = randm(3, 8, rng), tgt = randm(3, 8, rng);

    Tape tp(false);
    Matd fwd = tp.val(tp.rope(tp.leaf(a, false), &cache));
    CHECK((fwd - rope::apply_rope(a, pos, tables)).cwiseAbs().maxCoeff() == 0.0);

    CHECK(fd_check({a}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.rope(v[0], &cache), tgt);
          }) < 1e-7);
}

TEST_CASE("gather_rows accumulates duplicate ids") {
    Rng rng(8);
    Matd table = randm(5, 3, rng);
    std::vector<int> ids = {2, 0, 2, 4};  // duplicate row 2
    Matd tgt = randm(4, 3, rng);
    CHECK(fd_check({table}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.gather_rows(v[0], ids), tgt);
          }) < 1e-6);
    Tape tp;
    CHECK_THROWS_AS(tp.gather_rows(tp.leaf(table, false), std::vector<int>{5}), Error);
}

TEST_CASE("mean_rows, repeat_rows, add_row_bias backward") {
    Rng rng(9);
    Matd a = randm(4, 3, rng), bias = randm(1, 3, rng);
    CHECK(fd_check({a}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.mean_rows(v[0]), Matd::Zero(1, 3));
          }) < 1e-6);
    CHECK(fd_check({a}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.repeat_rows(v[0], {2, 0, 1, 3}), Matd::Zero(6, 3));
          }) < 1e-6);
    CHECK(fd_check({a, bias}, [&](Tape& t, const std::vector<Var>& v) {
              return t.mse(t.add_row_bias(v[0], v[1]), Matd::Zero(4, 3));
          }) < 1e-6);

    Tape tp;
    Var va = tp.leaf(a, false);
    CHECK_THROWS_AS(tp.repeat_rows(va, std::vector<int>{1, 2}), Error);
    CHECK_THROWS_AS(tp.add_row_bias(va, tp.leaf(Matd::Zero(1, 2), false)), Error);
}

TEST_CASE("mse value and gradient") {
    Matd a(1, 2), tgt(1, 2);
    a << 1.0, 3.0;
    tgt << 0.0, 1.0;
    Tape tp;
    Var va = tp.leaf(a, true);
    Var loss = tp.mse(va, tgt);
    CHECK(tp.val(loss)(0, 0) == doctest::Approx((1.0 + 4.0) / 2.0));
    tp.backward(loss);
    CHECK(tp.grad(va)(0, 0) == doctest::Approx(2.0 / 2.0 * 1.0));
    CHECK(tp.grad(va)(0, 1) == doctest::Approx(2.0 / 2.0 * 2.0));
}

TEST_CASE("composite graph: attention-like block end to end") {
    Rng rng(10);
    Matd x = randm(4, 6, rng), wq = randm(6, 6, rng, 0.5), wk = randm(6, 6, rng, 0.5),
         wv = randm(6, 6, rng, 0.5), tgt = randm(4, 6, rng);
    CHECK(fd_check({x, wq, wk, wv},
                   [&](Tape& t, const std::vector<Var>& v) {
                       Var q = t.matmul(v[0], v[1]);
                       Var k = t.matmul(v[0], v[2]);
                       Var val = t.matmul(v[0], v[3]);
                       Var logits = t.scale(t.matmul(q, t.transpose(k)), 1.0 / std::sqrt(6.0));
                       Var att = t.matmul(t.softmax_rows(logits), val);
                       return t.mse(att, tgt);
                   },
                   1e-5) < 1e-6);
}

TEST_CASE("needs-grad propagation and guards") {
    Tape tp(true);
    Var c = tp.constant(Matd::Ones(2, 2));
    Var l = tp.leaf(Matd::Ones(2, 2), true);
    Var sum = tp.add(c, l);
    Var loss = tp.mse(sum, Matd::Zero(2, 2));
    tp.backward(loss);
    CHECK(tp.grad(l).rows() == 2);        // leaf got a gradient
    CHECK(tp.grad(c).size() == 0);        // constants never allocate gradients

    // no-grad tape rejects backward but still evaluates
    Tape ng(false);
    Var a = ng.leaf(Matd::Ones(1, 1), true);
    Var sq = ng.cmul(a, a);
    CHECK(ng.val(sq)(0, 0) == 1.0);
    CHECK_THROWS_AS(ng.backward(sq), Error);

    // backward root must be scalar
    Tape tp2(true);
    Var m = tp2.leaf(Matd::Ones(2, 2), true);
    CHECK_THROWS_AS(tp2.backward(tp2.add(m, m)), Error);
}
