#pragma once
// flow.hpp — flow matching: linear interpolation path, velocity targets,
// stage-masked loss, classifier-free guidance and Euler sampling.

#include "ppc/common.hpp"
#include "ppc/raster.hpp"
#include "ppc/seq.hpp"
#include "ppc/tape.hpp"
#include "ppc/world.hpp"

#include <functional>
#include <optional>

namespace ppc::flow {

struct SampleConfig {
    int steps = 50;
    double guidance = 4.0;
    uint64_t seed = 0;

    void validate() const {
        require(steps >= 1, "bad-config", "steps must be >= 1");
        require(guidance >= 0.0, "bad-config", "guidance must be >= 0");
    }
};

// x_t = (1 - t) * x1 + t * x0  (t = 1 is pure noise, t = 0 is data)
template <typename M, typename S>
M interpolate(const M& x1, const M& x0, S t) {
    require(t >= S(0) && t <= S(1), "bad-config", "t must lie in [0,1]");
    require(x1.rows() == x0.rows() && x1.cols() == x0.cols(), "shape-mismatch",
            "interpolate operands differ");
    return (S(1) - t) * x1 + t * x0;
}

template <typename S>
Raster<S> interpolate(const Raster<S>& x1, const Raster<S>& x0, S t) {
    require(x1.same_shape(x0), "shape-mismatch", "interpolate rasters differ");
    Raster<S> r = x1;
    r.data = interpolate<Mat<S>, S>(x1.data, x0.data, t);
    return r;
}

// u = x0 - x1 (the constant time-derivative of the interpolant)
template <typename M>
M velocity_target(const M& x0, const M& x1) {
    require(x0.rows() == x1.rows() && x0.cols() == x1.cols(), "shape-mismatch",
            "velocity operands differ");
    return x0 - x1;
}

template <typename S>
Raster<S> velocity_target(const Raster<S>& x0, const Raster<S>& x1) {
    require(x0.same_shape(x1), "shape-mismatch", "velocity rasters differ");
    Raster<S> r = x0;
    r.data = x0.data - x1.data;
    return r;
}

// v = v_uncond + g * (v_cond - v_uncond)
template <typename M, typename S>
M cfg_combine(const M& v_cond, const M& v_uncond, S g) {
    require(v_cond.rows() == v_uncond.rows() && v_cond.cols() == v_uncond.cols(),
            "shape-mismatch", "cfg operands differ");
    return v_uncond + g * (v_cond - v_uncond);
}

// Euler integration of dx/dt = -v from t = 1 down to 0 on a uniform grid:
// x <- x - dt * v(x, t). The state is any dense matrix (callers pack token
// or raster data as they like).
template <typename S>
Mat<S> euler_sample(const std::function<Mat<S>(const Mat<S>&, S)>& velocity_fn,
                    Mat<S> x, const SampleConfig& cfg) {
    cfg.validate();
    const S dt = S(1) / S(cfg.steps);
    for (int k = 0; k < cfg.steps; ++k) {
        const S t = S(1) - S(k) * dt;
        Mat<S> v = velocity_fn(x, t);
        require(v.rows() == x.rows() && v.cols() == x.cols(), "shape-mismatch",
                "velocity shape differs from state");
        require(v.allFinite(), "numeric-blowup",
                "non-finite velocity at step " + std::to_string(k));
        x -= dt * v;
    }
    return x;
}

// ---- training batches ----

template <typename S>
struct FlowBatch {
    // pose modality (absent in phase-1 batches: 0-channel rasters)
    Raster<S> x1_pose, x0_pose, xt_pose, u_pose;
    // image modality (targets absent below the final stage)
    Raster<S> x0_img, xt_img;
    Raster<S> x1_img, u_img;  // valid iff has_img_target
    S t_pose = S(0), t_img = S(0);
    bool has_pose = false;
    bool has_img_target = false;
    bool dropped_text = false;
};

struct FlowOptions {
    double p_drop = 0.1;       // text-dropout probability for CFG training
    bool phase1 = false;       // [text | image] sequences only
    bool text_tau_zero = false;
};

template <typename S>
Raster<S> noise_raster(int channels, int h, int w, Rng& rng) {
    Raster<S> r(channels, h, w);
    for (Eigen::Index i = 0; i < r.data.rows(); ++i)
        for (Eigen::Index j = 0; j < r.data.cols(); ++j) r.data(i, j) = S(rng.gaussian());
    return r;
}

// Draws diffusion-forcing timesteps and noise for one stage sample and
// assembles the matching token sequence. Intermediate stages keep the image
// tokens at pure noise (t_img = 1) and provide no image target.
template <typename S>
std::pair<seq::TokenBatch<S>, FlowBatch<S>> make_training_batch(
    const world::StageSample& stage, Rng& rng, const FlowOptions& opt = {}) {
    const int H = stage.canvas_h, W = stage.canvas_w;
    FlowBatch<S> fb;
    fb.dropped_text = rng.uniform() < opt.p_drop;
    const S t_pose = S(rng.uniform());
    const S t_img = S(rng.uniform());
    const bool final_stage = stage.stage == stage.num_stages;

    if (!opt.phase1) {
        fb.has_pose = true;
        fb.t_pose = t_pose;
        fb.x1_pose = stage.target_pose.template cast<S>();
        fb.x0_pose = noise_raster<S>(world::kPoseChannels, H, W, rng);
        fb.xt_pose = interpolate(fb.x1_pose, fb.x0_pose, fb.t_pose);
        fb.u_pose = velocity_target(fb.x0_pose, fb.x1_pose);
    }
    fb.x0_img = noise_raster<S>(3, H, W, rng);
    if (final_stage) {
        require(stage.target_image.has_value(), "shape-mismatch",
                "final stage must carry a target image");
        fb.has_img_target = true;
        fb.t_img = t_img;
        fb.x1_img = stage.target_image->template cast<S>();
        fb.xt_img = interpolate(fb.x1_img, fb.x0_img, fb.t_img);
        fb.u_img = velocity_target(fb.x0_img, fb.x1_img);
    } else {
        fb.t_img = S(1);  // pure noise, no target
        fb.xt_img = fb.x0_img;
    }

    seq::AssembleOptions ao;
    ao.phase1 = opt.phase1;
    ao.text_tau_zero = opt.text_tau_zero;
    ao.drop_text = fb.dropped_text;
    seq::TokenBatch<S> tb = seq::assemble_sequence<S>(
        stage, opt.phase1 ? Raster<S>(0, 0, 0) : fb.xt_pose, fb.xt_img, fb.t_pose, fb.t_img,
        ao);
    return {std::move(tb), std::move(fb)};
}

// ---- loss ----

struct LossBreakdown {
    double total = 0.0, pose = 0.0, img = 0.0;
};

// Plain (non-differentiable) form on velocity rasters; the image MSE counts
// only at the final stage.
template <typename S>
LossBreakdown stage_loss(const Raster<S>& v_pose_pred, const Raster<S>& v_img_pred,
                         const FlowBatch<S>& fb, int stage, int num_stages, double lambda_pose,
                         double lambda_img) {
    require(stage >= 1 && stage <= num_stages, "bad-config", "stage out of range");
    LossBreakdown out;
    if (fb.has_pose) {
        require(v_pose_pred.same_shape(fb.u_pose), "shape-mismatch", "pose velocity shape");
        out.pose = static_cast<double>(
            (v_pose_pred.data - fb.u_pose.data).squaredNorm() / S(fb.u_pose.data.size()));
    }
    if (stage == num_stages && fb.has_img_target) {
        require(v_img_pred.same_shape(fb.u_img), "shape-mismatch", "image velocity shape");
        out.img = static_cast<double>(
            (v_img_pred.data - fb.u_img.data).squaredNorm() / S(fb.u_img.data.size()));
    }
    out.total = lambda_pose * out.pose + lambda_img * out.img;
    return out;
}

// Differentiable form on token-patch matrices (patch MSE == raster MSE:
// patchify is a permutation of the same scalars).
template <typename S>
typename tape::Tape<S>::Var stage_loss_tape(tape::Tape<S>& tp,
                                            typename tape::Tape<S>::Var v_pose,
                                            typename tape::Tape<S>::Var v_img,
                                            const FlowBatch<S>& fb, int patch, int stage,
                                            int num_stages, S lambda_pose, S lambda_img,
                                            LossBreakdown* breakdown = nullptr) {
    require(stage >= 1 && stage <= num_stages, "bad-config", "stage out of range");
    using TVar = typename tape::Tape<S>::Var;
    std::optional<TVar> loss;
    double pose_term = 0.0, img_term = 0.0;
    if (fb.has_pose) {
        TVar lp = tp.mse(v_pose, seq::patchify(fb.u_pose, patch));
        pose_term = static_cast<double>(tp.val(lp)(0, 0));
        loss = tp.scale(lp, lambda_pose);
    }
    if (stage == num_stages && fb.has_img_target) {
        TVar li = tp.mse(v_img, seq::patchify(fb.u_img, patch));
        img_term = static_cast<double>(tp.val(li)(0, 0));
        TVar wi = tp.scale(li, lambda_img);
        loss = loss ? tp.add(*loss, wi) : wi;
    }
    require(loss.has_value(), "bad-config", "stage loss has no active terms");
    if (breakdown) {
        breakdown->pose = pose_term;
        breakdown->img = img_term;
        breakdown->total = static_cast<double>(lambda_pose) * pose_term +
                           static_cast<double>(lambda_img) * img_term;
    }
    return *loss;
}

}  // namespace ppc::flow
