#pragma once
// tape.hpp — minimal reverse-mode autodiff over dense matrices.
//
// Nodes are created in topological order and walked in reverse for backward.
// Every op has a hand-written adjoint; finite-difference tests pin each one.

#include "ppc/common.hpp"
#include "ppc/rope.hpp"

#include <functional>
#include <vector>

namespace ppc::tape {

template <typename S>
class Tape {
  public:
    struct Var {
        int i = -1;
        bool valid() const { return i >= 0; }
    };

    explicit Tape(bool grad_enabled = true) : grad_(grad_enabled) {}

    Var leaf(Mat<S> value, bool needs_grad) {
        return push(std::move(value), needs_grad && grad_, nullptr);
    }
    Var constant(Mat<S> value) { return leaf(std::move(value), false); }

    const Mat<S>& val(Var v) const { return nodes_[v.i].v; }
    const Mat<S>& grad(Var v) const { return nodes_[v.i].g; }
    bool needs(Var v) const { return nodes_[v.i].needs; }

    // ---- elementwise ----

    Var add(Var a, Var b) {
        check_same(a, b);
        return binary(val(a) + val(b), a, b, [](Tape& t, Var a, Var b, const Mat<S>& g) {
            t.acc(a, g);
            t.acc(b, g);
        });
    }

    Var sub(Var a, Var b) {
        check_same(a, b);
        return binary(val(a) - val(b), a, b, [](Tape& t, Var a, Var b, const Mat<S>& g) {
            t.acc(a, g);
            t.acc(b, (-g).eval());
        });
    }

    Var cmul(Var a, Var b) {
        check_same(a, b);
        return binary(val(a).cwiseProduct(val(b)), a, b,
                      [](Tape& t, Var a, Var b, const Mat<S>& g) {
                          t.acc(a, g.cwiseProduct(t.val(b)));
                          t.acc(b, g.cwiseProduct(t.val(a)));
                      });
    }

    Var scale(Var a, S k) {
        return unary(val(a) * k, a,
                     [k](Tape& t, Var a, const Mat<S>& g) { t.acc(a, (g * k).eval()); });
    }

    Var add_const(Var a, S k) {
        return unary((val(a).array() + k).matrix(), a,
                     [](Tape& t, Var a, const Mat<S>& g) { t.acc(a, g); });
    }

    Var add_weighted(Var a, S wa, Var b, S wb) {
        check_same(a, b);
        return binary(wa * val(a) + wb * val(b), a, b,
                      [wa, wb](Tape& t, Var a, Var b, const Mat<S>& g) {
                          t.acc(a, (g * wa).eval());
                          t.acc(b, (g * wb).eval());
                      });
    }

    // ---- linear algebra ----

    Var matmul(Var a, Var b) {
        require(val(a).cols() == val(b).rows(), "shape-mismatch", "matmul inner dims");
        return binary(val(a) * val(b), a, b, [](Tape& t, Var a, Var b, const Mat<S>& g) {
            t.acc(a, g * t.val(b).transpose());
            t.acc(b, t.val(a).transpose() * g);
        });
    }

    Var transpose(Var a) {
        return unary(val(a).transpose(), a,
                     [](Tape& t, Var a, const Mat<S>& g) { t.acc(a, g.transpose().eval()); });
    }

    Var slice_rows(Var a, int r0, int n) {
        require(r0 >= 0 && r0 + n <= val(a).rows(), "shape-mismatch", "slice_rows range");
        return unary(val(a).middleRows(r0, n), a, [r0, n](Tape& t, Var a, const Mat<S>& g) {
            if (t.nodes_[a.i].needs) t.nodes_[a.i].g.middleRows(r0, n) += g;
        });
    }

    Var concat_rows(const std::vector<Var>& parts) {
        require(!parts.empty(), "shape-mismatch", "concat_rows needs parts");
        Eigen::Index rows = 0, cols = val(parts[0]).cols();
        for (Var p : parts) {
            require(val(p).cols() == cols, "shape-mismatch", "concat_rows widths differ");
            rows += val(p).rows();
        }
        Mat<S> out(rows, cols);
        Eigen::Index r = 0;
        for (Var p : parts) {
            out.middleRows(r, val(p).rows()) = val(p);
            r += val(p).rows();
        }
        bool any = false;
        if (grad_)
            for (Var p : parts) any = any || needs(p);
        if (!any) return push(std::move(out), false, nullptr);
        auto ps = parts;
        return push(std::move(out), true, [ps](Tape& t, const Mat<S>& g) {
            Eigen::Index r = 0;
            for (Var p : ps) {
                t.acc(p, g.middleRows(r, t.val(p).rows()).eval());
                r += t.val(p).rows();
            }
        });
    }

    Var slice_cols(Var a, int c0, int n) {
        require(c0 >= 0 && c0 + n <= val(a).cols(), "shape-mismatch", "slice_cols range");
        return unary(val(a).middleCols(c0, n), a, [c0, n](Tape& t, Var a, const Mat<S>& g) {
            if (t.nodes_[a.i].needs) t.nodes_[a.i].g.middleCols(c0, n) += g;
        });
    }

    Var concat_cols(const std::vector<Var>& parts) {
        require(!parts.empty(), "shape-mismatch", "concat_cols needs parts");
        Eigen::Index cols = 0, rows = val(parts[0]).rows();
        for (Var p : parts) {
            require(val(p).rows() == rows, "shape-mismatch", "concat_cols heights differ");
            cols += val(p).cols();
        }
        Mat<S> out(rows, cols);
        Eigen::Index c = 0;
        for (Var p : parts) {
            out.middleCols(c, val(p).cols()) = val(p);
            c += val(p).cols();
        }
        bool any = false;
        if (grad_)
            for (Var p : parts) any = any || needs(p);
        if (!any) return push(std::move(out), false, nullptr);
        auto ps = parts;
        return push(std::move(out), true, [ps](Tape& t, const Mat<S>& g) {
            Eigen::Index c = 0;
            for (Var p : ps) {
                t.acc(p, g.middleCols(c, t.val(p).cols()).eval());
                c += t.val(p).cols();
            }
        });
    }

    // ---- nonlinearities / normalization ----

    Var softmax_rows(Var a) {
        Mat<S> y = val(a);
        for (Eigen::Index r = 0; r < y.rows(); ++r) {
            S m = y.row(r).maxCoeff();
            y.row(r) = (y.row(r).array() - m).exp();
            y.row(r) /= y.row(r).sum();
        }
        Var out = push(std::move(y), grad_ && needs(a), nullptr);
        if (nodes_[out.i].needs) {
            int ai = a.i, oi = out.i;
            nodes_[out.i].back = [ai, oi](Tape& t, const Mat<S>& g) {
                const Mat<S>& y = t.nodes_[oi].v;
                Mat<S> gx = y.cwiseProduct(g);
                Vec<S> dot = gx.rowwise().sum();
                gx.noalias() -= y.cwiseProduct(dot.replicate(1, y.cols()).eval());
                t.acc(Var{ai}, gx);
            };
        }
        return out;
    }

    Var layernorm_rows(Var a, S eps) {
        const Mat<S>& x = val(a);
        Mat<S> y(x.rows(), x.cols());
        Vec<S> inv_sigma(x.rows());
        for (Eigen::Index r = 0; r < x.rows(); ++r) {
            S mu = x.row(r).mean();
            S var = (x.row(r).array() - mu).square().mean();
            inv_sigma(r) = S(1) / std::sqrt(var + eps);
            y.row(r) = ((x.row(r).array() - mu) * inv_sigma(r)).matrix();
        }
        Var out = push(std::move(y), grad_ && needs(a), nullptr);
        if (nodes_[out.i].needs) {
            int ai = a.i, oi = out.i;
            nodes_[out.i].back = [ai, oi, inv_sigma](Tape& t, const Mat<S>& g) {
                const Mat<S>& y = t.nodes_[oi].v;
                Mat<S> gx(y.rows(), y.cols());
                for (Eigen::Index r = 0; r < y.rows(); ++r) {
                    S gmean = g.row(r).mean();
                    S gy_mean = g.row(r).cwiseProduct(y.row(r)).mean();
                    gx.row(r) =
                        (((g.row(r).array() - gmean) - y.row(r).array() * gy_mean) *
                         inv_sigma(r))
                            .matrix();
                }
                t.acc(Var{ai}, gx);
            };
        }
        return out;
    }

    Var silu(Var a) {
        Mat<S> sig = (S(1) / (S(1) + (-val(a).array()).exp())).matrix();
        return unary(val(a).cwiseProduct(sig), a, [sig](Tape& t, Var a, const Mat<S>& g) {
            const Mat<S>& x = t.val(a);
            Mat<S> d =
                (sig.array() * (S(1) + x.array() * (S(1) - sig.array()))).matrix();
            t.acc(a, g.cwiseProduct(d));
        });
    }

    Var gelu(Var a) {
        const Mat<S>& x = val(a);
        Mat<S> phi = x.unaryExpr(
            [](S v) { return S(0.5) * (S(1) + std::erf(v / S(std::sqrt(2.0)))); });
        return unary(x.cwiseProduct(phi), a, [phi](Tape& t, Var a, const Mat<S>& g) {
            const Mat<S>& x = t.val(a);
            const S inv_sqrt2pi = S(1) / S(std::sqrt(2.0 * M_PI));
            Mat<S> pdf = (inv_sqrt2pi * (-S(0.5) * x.array().square()).exp()).matrix();
            Mat<S> d = phi + x.cwiseProduct(pdf);
            t.acc(a, g.cwiseProduct(d));
        });
    }

    // ---- structured ops ----

    // pairwise rotary rotation; cache must outlive the tape
    Var rope(Var a, const rope::RopeCache* cache) {
        Mat<S> y = val(a);
        rope::apply_rope_cached<S>(y, *cache, S(1));
        return unary(std::move(y), a, [cache](Tape& t, Var a, const Mat<S>& g) {
            Mat<S> gr = g;
            rope::apply_rope_cached<S>(gr, *cache, S(-1));  // inverse rotation
            t.acc(a, gr);
        });
    }

    Var gather_rows(Var table, std::vector<int> ids) {
        const Mat<S>& tb = val(table);
        Mat<S> out(static_cast<Eigen::Index>(ids.size()), tb.cols());
        for (size_t i = 0; i < ids.size(); ++i) {
            require(ids[i] >= 0 && ids[i] < tb.rows(), "bad-config", "token id out of vocab");
            out.row(static_cast<Eigen::Index>(i)) = tb.row(ids[i]);
        }
        return unary(std::move(out), table, [ids](Tape& t, Var table, const Mat<S>& g) {
            if (!t.nodes_[table.i].needs) return;
            for (size_t i = 0; i < ids.size(); ++i)
                t.nodes_[table.i].g.row(ids[i]) += g.row(static_cast<Eigen::Index>(i));
        });
    }

    Var mean_rows(Var a) {
        Mat<S> m = val(a).colwise().mean();
        Eigen::Index n = val(a).rows();
        return unary(std::move(m), a, [n](Tape& t, Var a, const Mat<S>& g) {
            t.acc(a, (g / S(n)).replicate(n, 1).eval());
        });
    }

    // k rows -> sum(counts) rows, row i repeated counts[i] times
    Var repeat_rows(Var a, std::vector<int> counts) {
        require(static_cast<Eigen::Index>(counts.size()) == val(a).rows(), "shape-mismatch",
                "one count per row");
        Eigen::Index total = 0;
        for (int c : counts) {
            require(c >= 0, "bad-config", "negative repeat count");
            total += c;
        }
        Mat<S> out(total, val(a).cols());
        Eigen::Index r = 0;
        for (size_t i = 0; i < counts.size(); ++i)
            for (int j = 0; j < counts[i]; ++j)
                out.row(r++) = val(a).row(static_cast<Eigen::Index>(i));
        return unary(std::move(out), a, [counts](Tape& t, Var a, const Mat<S>& g) {
            if (!t.nodes_[a.i].needs) return;
            Eigen::Index r = 0;
            for (size_t i = 0; i < counts.size(); ++i)
                for (int j = 0; j < counts[i]; ++j)
                    t.nodes_[a.i].g.row(static_cast<Eigen::Index>(i)) += g.row(r++);
        });
    }

    // a (n x d) + bias (1 x d) broadcast over rows
    Var add_row_bias(Var a, Var bias) {
        require(val(bias).rows() == 1 && val(bias).cols() == val(a).cols(), "shape-mismatch",
                "bias must be 1 x cols");
        Mat<S> out = val(a);
        out.rowwise() += val(bias).row(0);
        return binary(std::move(out), a, bias, [](Tape& t, Var a, Var bias, const Mat<S>& g) {
            t.acc(a, g);
            t.acc(bias, g.colwise().sum().eval());
        });
    }

    // mean squared error against a constant target; returns 1x1
    Var mse(Var a, Mat<S> target) {
        check_shape(a, target.rows(), target.cols());
        S n = S(target.size());
        Mat<S> out(1, 1);
        out(0, 0) = (val(a) - target).squaredNorm() / n;
        return unary(std::move(out), a, [target, n](Tape& t, Var a, const Mat<S>& g) {
            t.acc(a, ((g(0, 0) * S(2) / n) * (t.val(a) - target)).eval());
        });
    }

    // ---- backward ----

    void backward(Var root) {
        require(grad_, "bad-config", "backward on a no-grad tape");
        require(val(root).rows() == 1 && val(root).cols() == 1, "shape-mismatch",
                "backward root must be scalar");
        for (auto& n : nodes_)
            if (n.needs) n.g = Mat<S>::Zero(n.v.rows(), n.v.cols());
        nodes_[root.i].g = Mat<S>::Ones(1, 1);
        for (int i = root.i; i >= 0; --i)
            if (nodes_[i].needs && nodes_[i].back) nodes_[i].back(*this, nodes_[i].g);
    }

    size_t size() const { return nodes_.size(); }

  private:
    struct Node {
        Mat<S> v;
        Mat<S> g;
        bool needs = false;
        std::function<void(Tape&, const Mat<S>&)> back;
    };

    std::vector<Node> nodes_;
    bool grad_;

    void check_same(Var a, Var b) const {
        require(val(a).rows() == val(b).rows() && val(a).cols() == val(b).cols(),
                "shape-mismatch", "operand shapes differ");
    }
    void check_shape(Var a, Eigen::Index r, Eigen::Index c) const {
        require(val(a).rows() == r && val(a).cols() == c, "shape-mismatch",
                "unexpected operand shape");
    }

    Var push(Mat<S> v, bool needs, std::function<void(Tape&, const Mat<S>&)> back) {
        Node n;
        n.v = std::move(v);
        n.needs = needs;
        if (needs) n.back = std::move(back);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int>(nodes_.size()) - 1};
    }

    void acc(Var a, const Mat<S>& g) {
        if (nodes_[a.i].needs) nodes_[a.i].g += g;
    }

    template <typename F>
    Var unary(Mat<S> out, Var a, F f) {
        if (!(grad_ && needs(a))) return push(std::move(out), false, nullptr);
        return push(std::move(out), true,
                    [a, f](Tape& t, const Mat<S>& g) { f(t, a, g); });
    }

    template <typename F>
    Var binary(Mat<S> out, Var a, Var b, F f) {
        if (!(grad_ && (needs(a) || needs(b)))) return push(std::move(out), false, nullptr);
        return push(std::move(out), true,
                    [a, b, f](Tape& t, const Mat<S>& g) { f(t, a, b, g); });
    }
};

}  // namespace ppc::tape
