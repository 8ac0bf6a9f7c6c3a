#pragma once
// train.hpp — two-phase training: AdamW with decoupled weight decay and
// freeze-mask enforcement, deterministic shuffling, per-step metrics, and a
// finite-difference gradient verification harness.

#include "ppc/common.hpp"
#include "ppc/flow.hpp"
#include "ppc/model.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace ppc::train {

enum class Phase { pretrain, finetune };

struct TrainConfig {
    Phase phase = Phase::pretrain;
    double lr = 1e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    int batch = 16;
    int steps = 100;
    double lambda_pose = 1.0, lambda_img = 1.0;
    double p_drop = 0.1;
    uint64_t seed = 0;
    int ckpt_every = 0;  // 0: only at the end (caller's concern)

    void validate() const {
        require(lr >= 0.0 && weight_decay >= 0.0, "bad-config", "negative lr or decay");
        require(batch >= 1 && steps >= 0, "bad-config", "batch/steps must be positive");
        require(p_drop >= 0.0 && p_drop <= 1.0, "bad-config", "p_drop outside [0,1]");
    }
};

struct StepMetrics {
    int step = 0;
    double loss_total = 0, loss_pose = 0, loss_img = 0;
    double lr = 0, wall_ms = 0;
};

inline void append_metrics_csv(const std::string& path, const std::vector<StepMetrics>& rows,
                               bool write_header) {
    std::ofstream f(path, std::ios::app);
    require(f.good(), "io-error", "cannot open metrics log " + path);
    if (write_header) f << "step,loss_total,loss_pose,loss_img,lr,wall_ms\n";
    for (const auto& r : rows)
        f << r.step << "," << r.loss_total << "," << r.loss_pose << "," << r.loss_img << ","
          << r.lr << "," << r.wall_ms << "\n";
    require(f.good(), "io-error", "metrics log write failed");
}

// Decoupled-weight-decay Adam; moment state exists only for tensors that
// actually receive gradients (frozen tensors never allocate state).
template <typename S>
class AdamW {
  public:
    void step(model::ModelParams<S>& params, const std::map<std::string, Mat<S>>& grads,
              const TrainConfig& cfg) {
        ++t_;
        const S b1 = S(cfg.beta1), b2 = S(cfg.beta2);
        const S bc1 = S(1) - S(std::pow(cfg.beta1, static_cast<double>(t_)));
        const S bc2 = S(1) - S(std::pow(cfg.beta2, static_cast<double>(t_)));
        for (const auto& [name, g] : grads) {
            require(!params.is_frozen(name), "bad-config",
                    "gradient supplied for frozen tensor " + name);
            Mat<S>& th = params.at(name);
            auto& st = state_[name];
            if (st.m.size() == 0) {
                st.m = Mat<S>::Zero(th.rows(), th.cols());
                st.v = Mat<S>::Zero(th.rows(), th.cols());
            }
            st.m = b1 * st.m + (S(1) - b1) * g;
            st.v = (b2 * st.v.array() + (S(1) - b2) * g.array().square()).matrix();
            Mat<S> upd =
                ((st.m.array() / bc1) / ((st.v.array() / bc2).sqrt() + S(cfg.adam_eps)))
                    .matrix();
            if (cfg.weight_decay > 0.0 && params.decays(name)) upd += S(cfg.weight_decay) * th;
            th -= S(cfg.lr) * upd;
        }
    }
    size_t state_tensors() const { return state_.size(); }
    bool has_state(const std::string& name) const { return state_.count(name) > 0; }

  private:
    struct Moments {
        Mat<S> m, v;
    };
    std::map<std::string, Moments> state_;
    int64_t t_ = 0;
};

namespace detail {

// One differentiable forward + loss on a single stage sample. The caller owns
// `cache`, which must outlive any backward() on `tp`.
template <typename S>
typename tape::Tape<S>::Var sample_loss(tape::Tape<S>& tp, const model::ModelConfig& mcfg,
                                        const model::BoundParams<S>& bp,
                                        const seq::TokenBatch<S>& tb,
                                        const flow::FlowBatch<S>& fb, S lambda_pose,
                                        S lambda_img, const rope::RopeCache& cache,
                                        flow::LossBreakdown* bd) {
    model::ForwardVars<S> fv = model::forward_tape(tp, mcfg, bp, tb, cache);
    return flow::stage_loss_tape<S>(tp, fv.v_pose, fv.v_img, fb, tb.patch, tb.stage,
                                    tb.num_stages, lambda_pose, lambda_img, bd);
}

}  // namespace detail

// Mean flow loss over a fixed evaluation set; noise and timesteps are drawn
// from per-sample forked streams, so the value is comparable across calls.
template <typename S>
double eval_loss(const model::ModelConfig& mcfg, const model::ModelParams<S>& params,
                 const std::vector<world::StageSample>& samples, uint64_t seed, bool phase1,
                 double lambda_pose = 1.0, double lambda_img = 1.0) {
    require(!samples.empty(), "bad-config", "empty evaluation set");
    rope::RopeTables tables =
        rope::build_rope_tables(mcfg.head_dim, mcfg.rope_split, mcfg.rope_base);
    Rng root(seed);
    double total = 0.0;
    for (size_t i = 0; i < samples.size(); ++i) {
        Rng r = root.fork(i + 1);
        flow::FlowOptions fo;
        fo.p_drop = 0.0;
        fo.phase1 = phase1;
        auto [tb, fb] = flow::make_training_batch<S>(samples[i], r, fo);
        rope::RopeCache cache = rope::build_rope_cache(tb.positions, tables);
        tape::Tape<S> tp(false);
        model::BoundParams<S> bp = model::bind_params(tp, params);
        flow::LossBreakdown bd;
        detail::sample_loss<S>(tp, mcfg, bp, tb, fb, S(lambda_pose), S(lambda_img), cache,
                               &bd);
        total += bd.total;
    }
    return total / static_cast<double>(samples.size());
}

struct TrainResult {
    std::vector<StepMetrics> metrics;
};

// Deterministic training loop: epoch-wise Fisher-Yates shuffle, fresh noise
// per sample, gradient averaging over the batch, AdamW update. Aborts on a
// non-finite loss. (seed, cfg, dataset) fully determine the trajectory.
template <typename S>
TrainResult train_phase(const TrainConfig& cfg, const model::ModelConfig& mcfg,
                        const std::vector<world::StageSample>& dataset,
                        model::ModelParams<S>& params, const std::string& metrics_csv = "") {
    cfg.validate();
    require(!dataset.empty(), "bad-config", "empty training dataset");
    const bool phase1 = cfg.phase == Phase::pretrain;
    if (!phase1)
        require(params.has("in_proj.pose.w"), "bad-config",
                "finetune requires pose-stream parameters (phase-1 checkpoint + init)");
    for (const auto& s : dataset) {
        if (phase1)
            require(s.stage == s.num_stages, "bad-config",
                    "phase-1 dataset must contain final stages only");
    }
    rope::RopeTables tables =
        rope::build_rope_tables(mcfg.head_dim, mcfg.rope_split, mcfg.rope_base);

    Rng rng(cfg.seed);
    std::vector<size_t> order(dataset.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    size_t pos = order.size();  // forces a shuffle before the first draw

    AdamW<S> opt;
    TrainResult result;
    bool csv_header = true;
    for (int step = 1; step <= cfg.steps; ++step) {
        const auto t0 = std::chrono::steady_clock::now();
        std::map<std::string, Mat<S>> grads;
        flow::LossBreakdown mean_bd;
        for (int b = 0; b < cfg.batch; ++b) {
            if (pos == order.size()) {
                shuffle(order, rng);
                pos = 0;
            }
            const world::StageSample& sample = dataset[order[pos++]];
            flow::FlowOptions fo;
            fo.p_drop = cfg.p_drop;
            fo.phase1 = phase1;
            auto [tb, fb] = flow::make_training_batch<S>(sample, rng, fo);
            rope::RopeCache cache = rope::build_rope_cache(tb.positions, tables);
            tape::Tape<S> tp(true);
            model::BoundParams<S> bp = model::bind_params(tp, params);
            flow::LossBreakdown bd;
            auto loss = detail::sample_loss<S>(tp, mcfg, bp, tb, fb, S(cfg.lambda_pose),
                                               S(cfg.lambda_img), cache, &bd);
            tp.backward(loss);
            const S inv_batch = S(1) / S(cfg.batch);
            for (const auto& name : params.order) {
                if (params.is_frozen(name)) continue;
                const Mat<S>& g = tp.grad(bp.at(name));
                auto it = grads.find(name);
                if (it == grads.end())
                    grads.emplace(name, (g * inv_batch).eval());
                else
                    it->second += g * inv_batch;
            }
            mean_bd.total += bd.total / cfg.batch;
            mean_bd.pose += bd.pose / cfg.batch;
            mean_bd.img += bd.img / cfg.batch;
        }
        require(std::isfinite(mean_bd.total), "numeric-blowup",
                "non-finite loss at step " + std::to_string(step));
        opt.step(params, grads, cfg);

        StepMetrics m;
        m.step = step;
        m.loss_total = mean_bd.total;
        m.loss_pose = mean_bd.pose;
        m.loss_img = mean_bd.img;
        m.lr = cfg.lr;
        m.wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        result.metrics.push_back(m);
        if (!metrics_csv.empty()) {
            append_metrics_csv(metrics_csv, {m}, csv_header);
            csv_header = false;
        }
    }
    return result;
}

// ---- finite-difference verification ----------------------------------------

struct TensorCheck {
    std::string name;
    double max_rel_err = 0.0;
    double max_abs_grad = 0.0;
    int probes = 0;
};

struct GradCheckReport {
    std::vector<TensorCheck> tensors;
    double worst_rel_err = 0.0;
    bool pass(double tol) const { return worst_rel_err < tol; }
};

// Central finite differences (step h) on a random index subsample of every
// trainable tensor, against a fixed (batch, noise) drawn from `seed`.
template <typename S>
GradCheckReport grad_check(const model::ModelConfig& mcfg, model::ModelParams<S>& params,
                           const world::StageSample& sample, bool phase1, uint64_t seed,
                           double h = 1e-5, int probes_per_tensor = 4) {
    static_assert(std::is_same_v<S, double>, "finite differences require double precision");
    rope::RopeTables tables =
        rope::build_rope_tables(mcfg.head_dim, mcfg.rope_split, mcfg.rope_base);
    flow::FlowOptions fo;
    fo.p_drop = 0.0;
    fo.phase1 = phase1;
    Rng rbatch(seed);
    auto [tb, fb] = flow::make_training_batch<S>(sample, rbatch, fo);
    rope::RopeCache cache = rope::build_rope_cache(tb.positions, tables);

    auto loss_value = [&]() {
        tape::Tape<S> tp(false);
        model::BoundParams<S> bp = model::bind_params(tp, params);
        flow::LossBreakdown bd;
        detail::sample_loss<S>(tp, mcfg, bp, tb, fb, S(1), S(1), cache, &bd);
        return bd.total;
    };

    // analytic pass
    std::map<std::string, Mat<S>> analytic;
    {
        tape::Tape<S> tp(true);
        model::BoundParams<S> bp = model::bind_params(tp, params);
        flow::LossBreakdown bd;
        auto loss = detail::sample_loss<S>(tp, mcfg, bp, tb, fb, S(1), S(1), cache, &bd);
        tp.backward(loss);
        for (const auto& name : params.order)
            if (!params.is_frozen(name)) analytic.emplace(name, tp.grad(bp.at(name)));
    }

    GradCheckReport report;
    Rng rsel(seed ^ 0x9e3779b97f4a7c15ull);
    for (const auto& name : params.order) {
        if (params.is_frozen(name)) continue;
        Mat<S>& th = params.at(name);
        const Mat<S>& ga = analytic.at(name);
        TensorCheck tc;
        tc.name = name;
        tc.max_abs_grad = ga.size() ? ga.cwiseAbs().maxCoeff() : 0.0;
        const int n = static_cast<int>(th.size());
        const int k = std::min(probes_per_tensor, n);
        for (int pi = 0; pi < k; ++pi) {
            const int idx = static_cast<int>(rsel.uniform_int(0, n - 1));
            S* ptr = th.data() + idx;
            const S saved = *ptr;
            *ptr = saved + S(h);
            const double lp = loss_value();
            *ptr = saved - S(h);
            const double lm = loss_value();
            *ptr = saved;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = static_cast<double>(*(ga.data() + idx));
            const double denom = std::max({std::fabs(an), std::fabs(fd), 1e-6});
            const double rel = std::fabs(an - fd) / denom;
            tc.max_rel_err = std::max(tc.max_rel_err, rel);
            ++tc.probes;
        }
        report.worst_rel_err = std::max(report.worst_rel_err, tc.max_rel_err);
        report.tensors.push_back(std::move(tc));
    }
    return report;
}

}  // namespace ppc::train
