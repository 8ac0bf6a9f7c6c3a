#pragma once
// model.hpp — dual-stream diffusion transformer over the token sequence.
//
// One stack of blocks; within a block each kind segment uses its stream's
// weights (text / img / pose; pose_ctx and pose share the pose stream), then
// a single fused softmax attention runs over the whole sequence. Modulation
// is adaLN-zero: per-segment (scale, shift, gate) pairs from pooled
// conditioning + the segment's timestep embedding; zero gates make every
// block the identity at init. The pose stream is a copy of the image stream
// adapted via LoRA; the backbone stays frozen.

#include "ppc/common.hpp"
#include "ppc/rope.hpp"
#include "ppc/seq.hpp"
#include "ppc/tape.hpp"
#include "ppc/world.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace ppc::model {

struct ModelConfig {
    int vocab = world::kVocabSize;
    int d_model = 64;
    int n_blocks = 4;
    int n_heads = 2;
    int head_dim = 32;
    int mlp_ratio = 4;
    int lora_rank = 8;
    int patch = 2;
    rope::RopeSplit rope_split{8, 12, 12};
    double rope_base = 10000.0;
    double ln_eps = 1e-6;

    int pose_dim() const { return world::kPoseChannels * patch * patch; }
    int img_dim() const { return 3 * patch * patch; }
    int mlp_dim() const { return d_model * mlp_ratio; }

    void validate() const {
        require(d_model > 0 && d_model % 2 == 0, "bad-config", "d_model must be positive even");
        require(n_heads >= 1 && head_dim >= 1, "bad-config", "need at least one head");
        require(n_heads * head_dim == d_model, "bad-config",
                "n_heads * head_dim must equal d_model");
        require(rope_split.total() == head_dim, "invalid-split",
                "rope split must sum to head_dim");
        require(n_blocks >= 1 && mlp_ratio >= 1 && patch >= 1, "bad-config",
                "blocks, mlp_ratio, patch must be positive");
        require(lora_rank >= 1, "bad-config", "lora rank must be positive");
        require(vocab >= world::kVocabSize, "bad-config", "vocab smaller than world alphabet");
    }
};

// Named dense tensors plus freeze / weight-decay masks. Storage convention:
// every linear keeps W as (in x out) with y = x * W, bias as 1 x out.
template <typename S>
struct ModelParams {
    ModelConfig cfg;
    std::map<std::string, Mat<S>> tensors;
    std::vector<std::string> order;  // insertion order, fixes checkpoint layout
    std::set<std::string> frozen;
    std::set<std::string> decay;  // weight decay applies only to these

    void add(const std::string& name, Mat<S> m, bool decays) {
        require(!tensors.count(name), "bad-config", "duplicate tensor " + name);
        tensors.emplace(name, std::move(m));
        order.push_back(name);
        if (decays) decay.insert(name);
    }
    bool has(const std::string& name) const { return tensors.count(name) > 0; }
    Mat<S>& at(const std::string& name) {
        auto it = tensors.find(name);
        require(it != tensors.end(), "unknown-key", "no tensor named " + name);
        return it->second;
    }
    const Mat<S>& at(const std::string& name) const {
        auto it = tensors.find(name);
        require(it != tensors.end(), "unknown-key", "no tensor named " + name);
        return it->second;
    }
    bool is_frozen(const std::string& name) const { return frozen.count(name) > 0; }
    bool decays(const std::string& name) const { return decay.count(name) > 0; }
    size_t count_scalars(bool trainable_only = false) const {
        size_t n = 0;
        for (const auto& name : order)
            if (!trainable_only || !is_frozen(name))
                n += static_cast<size_t>(tensors.at(name).size());
        return n;
    }
};

inline const std::vector<std::string>& lora_targets() {
    static const std::vector<std::string> t = {"wq", "wk", "wv", "wo", "fc1", "fc2", "mod"};
    return t;
}

// ---- initialization ----

namespace detail {

template <typename S>
Mat<S> randn(int r, int c, S std, Rng& rng) {
    Mat<S> m(r, c);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = S(rng.gaussian()) * std;
    return m;
}

template <typename S>
void add_linear(ModelParams<S>& p, const std::string& prefix, int in, int out, S init_std,
                Rng& rng, bool decays = true) {
    if (init_std > S(0))
        p.add(prefix + ".w", randn<S>(in, out, init_std, rng), decays);
    else
        p.add(prefix + ".w", Mat<S>::Zero(in, out), decays);
    p.add(prefix + ".b", Mat<S>::Zero(1, out), false);
}

template <typename S>
void add_stream(ModelParams<S>& p, const std::string& prefix, const ModelConfig& cfg,
                Rng& rng) {
    const int d = cfg.d_model;
    const S w = S(0.02);
    for (const char* n : {"wq", "wk", "wv", "wo"})
        add_linear<S>(p, prefix + ".attn." + n, d, d, w, rng);
    add_linear<S>(p, prefix + ".mlp.fc1", d, cfg.mlp_dim(), w, rng);
    add_linear<S>(p, prefix + ".mlp.fc2", cfg.mlp_dim(), d, w, rng);
    // adaLN-zero: whole modulation linear starts at zero -> identity blocks
    add_linear<S>(p, prefix + ".mod", d, 6 * d, S(0), rng, false);
}

}  // namespace detail

// Phase-1 parameter set: text + image streams only (the emulated pretrained
// backbone; there is no pose stream yet).
template <typename S>
ModelParams<S> init_params(const ModelConfig& cfg, Rng& rng) {
    cfg.validate();
    ModelParams<S> p;
    p.cfg = cfg;
    const int d = cfg.d_model;
    const S w = S(0.02);
    p.add("embed.table", detail::randn<S>(cfg.vocab, d, w, rng), false);
    p.add("kind.text", detail::randn<S>(1, d, w, rng), false);
    p.add("kind.image", detail::randn<S>(1, d, w, rng), false);
    detail::add_linear<S>(p, "time.fc1", d, d, w, rng);
    detail::add_linear<S>(p, "time.fc2", d, d, w, rng);
    detail::add_linear<S>(p, "in_proj.img", cfg.img_dim(), d, w, rng);
    for (int b = 0; b < cfg.n_blocks; ++b) {
        detail::add_stream<S>(p, "blocks." + std::to_string(b) + ".text", cfg, rng);
        detail::add_stream<S>(p, "blocks." + std::to_string(b) + ".img", cfg, rng);
    }
    detail::add_linear<S>(p, "head.img", d, cfg.img_dim(), S(0), rng);  // zero-init head
    return p;
}

// Phase-2 init: pose stream = bit-identical copy of the image stream
// (projections, head and kind embedding included), LoRA deltas attached with
// zero up-projections, then everything frozen except the pose adaptation set.
template <typename S>
void init_pose_stream(ModelParams<S>& p, Rng& rng) {
    const ModelConfig& cfg = p.cfg;
    require(p.has("in_proj.img.w"), "bad-config", "phase-1 parameters required");
    require(!p.has("in_proj.pose.w"), "bad-config", "pose stream already initialized");
    require(cfg.pose_dim() == cfg.img_dim(), "bad-config",
            "pose/img patch widths must match to copy projections");

    p.add("kind.pose", p.at("kind.image"), false);
    p.add("kind.pose_ctx", p.at("kind.image"), false);
    p.add("in_proj.pose.w", p.at("in_proj.img.w"), true);
    p.add("in_proj.pose.b", p.at("in_proj.img.b"), false);
    for (int b = 0; b < cfg.n_blocks; ++b) {
        const std::string img = "blocks." + std::to_string(b) + ".img.";
        const std::string pose = "blocks." + std::to_string(b) + ".pose.";
        for (const char* n : {"attn.wq", "attn.wk", "attn.wv", "attn.wo", "mlp.fc1", "mlp.fc2",
                              "mod"}) {
            p.add(pose + n + ".w", p.at(img + n + ".w"), false);  // frozen base: no decay
            p.add(pose + n + ".b", p.at(img + n + ".b"), false);
        }
    }
    p.add("head.pose.w", p.at("head.img.w"), true);
    p.add("head.pose.b", p.at("head.img.b"), false);

    const int d = cfg.d_model, r = cfg.lora_rank;
    auto dims_of = [&](const std::string& t) -> std::pair<int, int> {
        if (t == "fc1") return {d, cfg.mlp_dim()};
        if (t == "fc2") return {cfg.mlp_dim(), d};
        if (t == "mod") return {d, 6 * d};
        return {d, d};
    };
    for (int b = 0; b < cfg.n_blocks; ++b)
        for (const auto& t : lora_targets()) {
            auto [in, out] = dims_of(t);
            const std::string base = "lora." + std::to_string(b) + ".pose." + t;
            p.add(base + ".down", detail::randn<S>(in, r, S(0.05), rng), true);
            p.add(base + ".up", Mat<S>::Zero(r, out), true);
        }

    // freeze the backbone: only the pose adaptation set stays trainable
    for (const auto& name : p.order) {
        bool trainable = name.rfind("lora.", 0) == 0 || name.rfind("in_proj.pose.", 0) == 0 ||
                         name.rfind("head.pose.", 0) == 0 || name == "kind.pose" ||
                         name == "kind.pose_ctx";
        if (!trainable) p.frozen.insert(name);
    }
}

// Additive N(0, std) noise on every tensor (frozen ones included). Gradient
// checks need this: at the structured zero init the adaLN gates silence most
// paths and finite differences would only probe a degenerate point.
template <typename S>
void jitter_params(ModelParams<S>& p, Rng& rng, double std_dev = 0.05) {
    for (const auto& name : p.order) {
        Mat<S>& t = p.tensors.at(name);
        t += detail::randn<S>(static_cast<int>(t.rows()), static_cast<int>(t.cols()),
                              S(std_dev), rng);
    }
}

// ---- LoRA (op-level contract; the forward pass uses the same math in the
// row convention) ----

template <typename S>
struct LoraDelta {
    Mat<S> down;  // r x d
    Mat<S> up;    // d x r
};

// output = base * input + up * (down * input)
template <typename S>
Mat<S> apply_lora(const Mat<S>& base, const LoraDelta<S>& delta, const Mat<S>& input) {
    require(delta.down.rows() == delta.up.cols(), "invalid-rank", "down/up rank mismatch");
    require(delta.down.cols() == base.cols() && delta.up.rows() == base.rows(),
            "shape-mismatch", "lora dims do not match base");
    require(delta.down.rows() <= std::min(base.rows(), base.cols()), "invalid-rank",
            "rank exceeds base dimension");
    require(base.cols() == input.rows(), "shape-mismatch", "input height mismatch");
    return base * input + delta.up * (delta.down * input);
}

// ---- forward ----

// Optional introspection; filled only when requested.
template <typename S>
struct ForwardTrace {
    std::vector<Mat<S>> attn;  // n_blocks * n_heads row-stochastic T x T matrices
    Mat<S> x_input;            // post input-projection token embeddings, T x d
    Mat<S> x_final;            // pre-head token embeddings, T x d
};

template <typename S>
struct ForwardVars {
    typename tape::Tape<S>::Var v_pose;  // pose_len x pose_dim (valid iff has_pose)
    typename tape::Tape<S>::Var v_img;   // img_len x img_dim
    bool has_pose = false;
    int pose_start = 0, img_start = 0;
};

// All parameters as tape leaves; gradients flow into every non-frozen tensor.
template <typename S>
struct BoundParams {
    std::map<std::string, typename tape::Tape<S>::Var> vars;
    typename tape::Tape<S>::Var at(const std::string& name) const {
        auto it = vars.find(name);
        require(it != vars.end(), "unknown-key", "no bound tensor named " + name);
        return it->second;
    }
    bool has(const std::string& name) const { return vars.count(name) > 0; }
};

template <typename S>
BoundParams<S> bind_params(tape::Tape<S>& tp, const ModelParams<S>& p) {
    BoundParams<S> b;
    for (const auto& name : p.order)
        b.vars.emplace(name, tp.leaf(p.tensors.at(name), !p.is_frozen(name)));
    return b;
}

// DiT-style sinusoidal features of a single timestep, 1 x d (d even).
template <typename S>
Mat<S> timestep_features(S t, int d) {
    Mat<S> f(1, d);
    const int half = d / 2;
    for (int j = 0; j < half; ++j) {
        double freq = std::exp(-std::log(10000.0) * j / half);
        double a = static_cast<double>(t) * 1000.0 * freq;
        f(0, 2 * j) = S(std::cos(a));
        f(0, 2 * j + 1) = S(std::sin(a));
    }
    return f;
}

namespace detail {

template <typename S>
struct Segment {
    seq::Kind kind;
    int start = 0, len = 0;
    S t = S(0);
    std::string stream;  // "text", "pose" or "img"
    bool lora = false;   // pose-stream segments use LoRA when deltas exist
};

// y = x * W + b, with the pose stream's low-rank delta when attached
template <typename S>
typename tape::Tape<S>::Var linear(tape::Tape<S>& tp, const BoundParams<S>& bp,
                                   typename tape::Tape<S>::Var x, const std::string& prefix,
                                   const std::string& lora_name, bool lora) {
    auto y = tp.matmul(x, bp.at(prefix + ".w"));
    if (lora && bp.has(lora_name + ".down"))
        y = tp.add(y, tp.matmul(tp.matmul(x, bp.at(lora_name + ".down")),
                                bp.at(lora_name + ".up")));
    return tp.add_row_bias(y, bp.at(prefix + ".b"));
}

}  // namespace detail

// Differentiable forward pass. Velocity outputs stay in token-patch form
// (MSE there equals MSE on the unpatchified rasters); forward() below wraps
// them back into rasters for callers outside training.
template <typename S>
ForwardVars<S> forward_tape(tape::Tape<S>& tp, const ModelConfig& cfg,
                            const BoundParams<S>& bp, const seq::TokenBatch<S>& batch,
                            const rope::RopeCache& cache, ForwardTrace<S>* trace = nullptr) {
    using TVar = typename tape::Tape<S>::Var;
    cfg.validate();
    const int d = cfg.d_model;
    require(batch.total() > 0, "shape-mismatch", "empty token batch");
    require(static_cast<int>(batch.positions.size()) == batch.total(), "shape-mismatch",
            "positions do not cover the sequence");
    require(cache.cosv.rows() == batch.total(), "shape-mismatch",
            "rope cache does not match sequence length");

    // segments in fixed order; zero-length ones dropped
    std::vector<detail::Segment<S>> segs;
    int cursor = 0;
    auto add_seg = [&](seq::Kind k, int len, S t, const char* stream, bool lora) {
        if (len > 0) segs.push_back({k, cursor, len, t, stream, lora});
        cursor += len;
    };
    const S t_pose = batch.pose_len() ? batch.t_mod(batch.text_len() + batch.ctx_len()) : S(0);
    const S t_img = batch.img_len() ? batch.t_mod(batch.total() - 1) : S(0);
    add_seg(seq::Kind::text, batch.text_len(), S(0), "text", false);
    add_seg(seq::Kind::pose_ctx, batch.ctx_len(), S(0), "pose", true);
    add_seg(seq::Kind::pose, batch.pose_len(), t_pose, "pose", true);
    add_seg(seq::Kind::image, batch.img_len(), t_img, "img", false);

    // ---- input projections ----
    std::vector<TVar> parts;
    for (const auto& s : segs) {
        TVar x;
        switch (s.kind) {
            case seq::Kind::text:
                x = tp.add_row_bias(tp.gather_rows(bp.at("embed.table"), batch.text_ids),
                                    bp.at("kind.text"));
                break;
            case seq::Kind::pose_ctx:
                x = tp.add_row_bias(
                    detail::linear(tp, bp, tp.constant(batch.ctx_patches), "in_proj.pose", "",
                                   false),
                    bp.at("kind.pose_ctx"));
                break;
            case seq::Kind::pose:
                x = tp.add_row_bias(
                    detail::linear(tp, bp, tp.constant(batch.pose_patches), "in_proj.pose", "",
                                   false),
                    bp.at("kind.pose"));
                break;
            case seq::Kind::image:
                x = tp.add_row_bias(
                    detail::linear(tp, bp, tp.constant(batch.img_patches), "in_proj.img", "",
                                   false),
                    bp.at("kind.image"));
                break;
        }
        parts.push_back(x);
    }
    TVar x = parts.size() == 1 ? parts[0] : tp.concat_rows(parts);
    if (trace) trace->x_input = tp.val(x);

    // ---- conditioning: pooled global embedding + per-segment timestep ----
    require(!batch.global_ids.empty(), "shape-mismatch", "global tokens required for pooling");
    TVar pooled = tp.mean_rows(tp.gather_rows(bp.at("embed.table"), batch.global_ids));
    std::vector<TVar> seg_cond;  // silu(c_seg), 1 x d each
    std::vector<int> seg_counts;
    for (const auto& s : segs) {
        TVar tf = tp.constant(timestep_features<S>(s.t, d));
        TVar temb = detail::linear(tp, bp, tp.silu(detail::linear(tp, bp, tf, "time.fc1", "", false)),
                                   "time.fc2", "", false);
        seg_cond.push_back(tp.silu(tp.add(pooled, temb)));
        seg_counts.push_back(s.len);
    }

    // ---- blocks ----
    const S attn_scale = S(1) / S(std::sqrt(static_cast<double>(cfg.head_dim)));
    for (int b = 0; b < cfg.n_blocks; ++b) {
        const std::string bs = "blocks." + std::to_string(b) + ".";
        auto lname = [&](const char* t) { return "lora." + std::to_string(b) + ".pose." + t; };

        // per-segment modulation rows -> T x 6d, then six T x d slices
        std::vector<TVar> mod_rows;
        for (size_t si = 0; si < segs.size(); ++si)
            mod_rows.push_back(detail::linear(tp, bp, seg_cond[si], bs + segs[si].stream + ".mod",
                                              lname("mod"), segs[si].lora));
        TVar modm = tp.repeat_rows(
            mod_rows.size() == 1 ? mod_rows[0] : tp.concat_rows(mod_rows), seg_counts);
        TVar shift1 = tp.slice_cols(modm, 0, d), scale1 = tp.slice_cols(modm, d, d);
        TVar gate1 = tp.slice_cols(modm, 2 * d, d), shift2 = tp.slice_cols(modm, 3 * d, d);
        TVar scale2 = tp.slice_cols(modm, 4 * d, d), gate2 = tp.slice_cols(modm, 5 * d, d);

        auto per_segment = [&](TVar h, const char* which, const char* lora_t) {
            std::vector<TVar> outs;
            for (const auto& s : segs)
                outs.push_back(detail::linear(tp, bp, tp.slice_rows(h, s.start, s.len),
                                              bs + s.stream + "." + which, lname(lora_t),
                                              s.lora));
            return outs.size() == 1 ? outs[0] : tp.concat_rows(outs);
        };

        // attention sublayer
        TVar h = tp.add(tp.cmul(tp.layernorm_rows(x, S(cfg.ln_eps)), tp.add_const(scale1, S(1))),
                        shift1);
        TVar q = per_segment(h, "attn.wq", "wq");
        TVar k = per_segment(h, "attn.wk", "wk");
        TVar v = per_segment(h, "attn.wv", "wv");
        std::vector<TVar> heads;
        for (int hd = 0; hd < cfg.n_heads; ++hd) {
            TVar qh = tp.rope(tp.slice_cols(q, hd * cfg.head_dim, cfg.head_dim), &cache);
            TVar kh = tp.rope(tp.slice_cols(k, hd * cfg.head_dim, cfg.head_dim), &cache);
            TVar vh = tp.slice_cols(v, hd * cfg.head_dim, cfg.head_dim);
            TVar probs = tp.softmax_rows(tp.scale(tp.matmul(qh, tp.transpose(kh)), attn_scale));
            if (trace) trace->attn.push_back(tp.val(probs));
            heads.push_back(tp.matmul(probs, vh));
        }
        TVar att = heads.size() == 1 ? heads[0] : tp.concat_cols(heads);
        x = tp.add(x, tp.cmul(gate1, per_segment(att, "attn.wo", "wo")));

        // MLP sublayer
        TVar h2 = tp.add(
            tp.cmul(tp.layernorm_rows(x, S(cfg.ln_eps)), tp.add_const(scale2, S(1))), shift2);
        std::vector<TVar> mlp_outs;
        for (const auto& s : segs) {
            TVar hs = tp.slice_rows(h2, s.start, s.len);
            TVar m = tp.gelu(
                detail::linear(tp, bp, hs, bs + s.stream + ".mlp.fc1", lname("fc1"), s.lora));
            mlp_outs.push_back(
                detail::linear(tp, bp, m, bs + s.stream + ".mlp.fc2", lname("fc2"), s.lora));
        }
        TVar mlp = mlp_outs.size() == 1 ? mlp_outs[0] : tp.concat_rows(mlp_outs);
        x = tp.add(x, tp.cmul(gate2, mlp));
    }
    if (trace) trace->x_final = tp.val(x);

    // ---- velocity heads (pose / image segments only) ----
    ForwardVars<S> out;
    for (const auto& s : segs) {
        if (s.kind == seq::Kind::pose) {
            TVar hp = tp.layernorm_rows(tp.slice_rows(x, s.start, s.len), S(cfg.ln_eps));
            out.v_pose = detail::linear(tp, bp, hp, "head.pose", "", false);
            out.has_pose = true;
            out.pose_start = s.start;
        }
        if (s.kind == seq::Kind::image) {
            TVar hi = tp.layernorm_rows(tp.slice_rows(x, s.start, s.len), S(cfg.ln_eps));
            out.v_img = detail::linear(tp, bp, hi, "head.img", "", false);
            out.img_start = s.start;
        }
    }
    require(batch.img_len() > 0, "shape-mismatch", "image segment required");
    return out;
}

template <typename S>
struct ForwardOutput {
    Raster<S> v_pose;  // empty (0 channels) when the batch has no pose segment
    Raster<S> v_img;
    bool has_pose = false;
};

// Inference-mode forward: no gradients, rasters out.
template <typename S>
ForwardOutput<S> forward(const ModelConfig& cfg, const ModelParams<S>& params,
                         const seq::TokenBatch<S>& batch, ForwardTrace<S>* trace = nullptr) {
    rope::RopeTables tables =
        rope::build_rope_tables(cfg.head_dim, cfg.rope_split, cfg.rope_base);
    rope::RopeCache cache = rope::build_rope_cache(batch.positions, tables);
    tape::Tape<S> tp(false);
    BoundParams<S> bp = bind_params(tp, params);
    ForwardVars<S> fv = forward_tape(tp, cfg, bp, batch, cache, trace);
    ForwardOutput<S> out;
    out.has_pose = fv.has_pose;
    if (fv.has_pose)
        out.v_pose = seq::unpatchify<S>(tp.val(fv.v_pose), world::kPoseChannels, batch.grid_w,
                                        batch.grid_h, batch.patch);
    out.v_img =
        seq::unpatchify<S>(tp.val(fv.v_img), 3, batch.grid_w, batch.grid_h, batch.patch);
    return out;
}

}  // namespace ppc::model
