#pragma once
// seq.hpp — token layout: patchify, role-aware positions, sequence assembly.

#include "ppc/common.hpp"
#include "ppc/raster.hpp"
#include "ppc/world.hpp"

#include <vector>

namespace ppc::seq {

enum class Kind : uint8_t { text = 0, pose_ctx = 1, pose = 2, image = 3 };

// 3-axis position: tau binds tokens to persons, (x, y) are patch-grid
// coordinates (0 for text).
struct PositionId {
    int tau = 0, x = 0, y = 0;
};

inline bool operator==(const PositionId& a, const PositionId& b) {
    return a.tau == b.tau && a.x == b.x && a.y == b.y;
}

struct PositionLayout {
    int text_len = 0;
    // span [first, second) of text tokens owned by person i+1 (tau = i+1)
    std::vector<std::pair<int, int>> text_spans;
    int grid_w = 0, grid_h = 0;
    bool has_ctx = false;
    std::vector<world::Box> boxes;  // boxes of persons 1..i, person order
    int ctx_people = 0;             // ctx tokens use only the first ctx_people boxes
    bool text_tau_zero = false;     // ablation: all text tau forced to 0
};

// Positions for the concatenated [text | pose_ctx? | pose | image] sequence.
// Visual tokens inside several boxes take the latest person's tau (overwrite);
// outside every box tau = 0. Throws Error("span-conflict") on overlapping
// text spans.
std::vector<PositionId> assign_positions(const PositionLayout& layout);

// raster -> tokens x (C*p*p); channel-major flatten, tokens row-major over the
// patch grid
template <typename S>
Mat<S> patchify(const Raster<S>& r, int p) {
    require(p >= 1 && r.h % p == 0 && r.w % p == 0, "shape-mismatch",
            "raster not divisible by patch");
    const int gw = r.w / p, gh = r.h / p;
    Mat<S> out(gw * gh, r.channels * p * p);
    for (int gy = 0; gy < gh; ++gy)
        for (int gx = 0; gx < gw; ++gx)
            for (int c = 0; c < r.channels; ++c)
                for (int dy = 0; dy < p; ++dy)
                    for (int dx = 0; dx < p; ++dx)
                        out(gy * gw + gx, c * p * p + dy * p + dx) =
                            r.at(c, gy * p + dy, gx * p + dx);
    return out;
}

// exact inverse of patchify
template <typename S>
Raster<S> unpatchify(const Mat<S>& tokens, int channels, int grid_w, int grid_h, int p) {
    require(tokens.rows() == static_cast<Eigen::Index>(grid_w) * grid_h, "shape-mismatch",
            "token count does not match grid");
    require(tokens.cols() == static_cast<Eigen::Index>(channels) * p * p, "shape-mismatch",
            "token width does not match channels*p*p");
    Raster<S> r(channels, grid_h * p, grid_w * p);
    for (int gy = 0; gy < grid_h; ++gy)
        for (int gx = 0; gx < grid_w; ++gx)
            for (int c = 0; c < channels; ++c)
                for (int dy = 0; dy < p; ++dy)
                    for (int dx = 0; dx < p; ++dx)
                        r.at(c, gy * p + dy, gx * p + dx) =
                            tokens(gy * grid_w + gx, c * p * p + dy * p + dx);
    return r;
}

// Assembled model input. Text/global tokens stay as ids (embedded inside the
// differentiable forward so the table trains); visual tokens stay as raw patch
// vectors (projected by per-stream input projections inside the model).
template <typename S>
struct TokenBatch {
    std::vector<Kind> kinds;
    std::vector<PositionId> positions;
    Vec<S> t_mod;  // per-token modulation time: 0 text/ctx, t_pose, t_img

    std::vector<int> text_ids;
    std::vector<int> global_ids;  // pooled conditioning source
    Mat<S> ctx_patches, pose_patches, img_patches;

    int grid_w = 0, grid_h = 0, patch = 2;
    int pose_channels = 0, img_channels = 0;
    int stage = 1, num_stages = 1;

    int text_len() const { return static_cast<int>(text_ids.size()); }
    int ctx_len() const { return static_cast<int>(ctx_patches.rows()); }
    int pose_len() const { return static_cast<int>(pose_patches.rows()); }
    int img_len() const { return static_cast<int>(img_patches.rows()); }
    int total() const { return text_len() + ctx_len() + pose_len() + img_len(); }
};

struct AssembleOptions {
    bool phase1 = false;  // [text | image] only: no pose_ctx / pose segments
    bool text_tau_zero = false;
    bool drop_text = false;  // CFG dropout: all text/global ids -> null token
};

template <typename S>
TokenBatch<S> assemble_sequence(const world::StageSample& stage, const Raster<S>& noised_pose,
                                const Raster<S>& noised_image, S t_pose, S t_img,
                                const AssembleOptions& opt = {}) {
    const int p = stage.patch;
    const int gw = stage.canvas_w / p, gh = stage.canvas_h / p;
    require(noised_image.channels == 3 && noised_image.h == stage.canvas_h &&
                noised_image.w == stage.canvas_w,
            "shape-mismatch", "image raster does not match canvas");
    if (!opt.phase1) {
        require(noised_pose.channels == world::kPoseChannels &&
                    noised_pose.h == stage.canvas_h && noised_pose.w == stage.canvas_w,
                "shape-mismatch", "pose raster does not match canvas");
        require(stage.context_pose.h == stage.canvas_h && stage.context_pose.w == stage.canvas_w,
                "shape-mismatch", "context raster does not match canvas");
    }

    TokenBatch<S> b;
    b.grid_w = gw;
    b.grid_h = gh;
    b.patch = p;
    b.pose_channels = world::kPoseChannels;
    b.img_channels = 3;
    b.stage = stage.stage;
    b.num_stages = stage.num_stages;
    b.text_ids = stage.text_tokens;
    b.global_ids = stage.global_tokens;
    if (opt.drop_text) {
        std::fill(b.text_ids.begin(), b.text_ids.end(), world::kTokNull);
        std::fill(b.global_ids.begin(), b.global_ids.end(), world::kTokNull);
    }

    const bool has_ctx = !opt.phase1 && stage.stage > 1;  // P_0 is empty: no ctx tokens
    if (has_ctx)
        b.ctx_patches = patchify(stage.context_pose.template cast<S>(), p);
    else
        b.ctx_patches = Mat<S>(0, world::kPoseChannels * p * p);
    if (!opt.phase1)
        b.pose_patches = patchify(noised_pose, p);
    else
        b.pose_patches = Mat<S>(0, world::kPoseChannels * p * p);
    b.img_patches = patchify(noised_image, p);

    PositionLayout layout;
    layout.text_len = b.text_len();
    for (size_t i = 0; i < stage.boxes.size(); ++i)
        layout.text_spans.push_back({static_cast<int>(i) * world::kDescLen,
                                     static_cast<int>(i + 1) * world::kDescLen});
    layout.grid_w = gw;
    layout.grid_h = gh;
    layout.has_ctx = has_ctx;
    layout.boxes = stage.boxes;
    layout.ctx_people = stage.stage - 1;
    layout.text_tau_zero = opt.text_tau_zero;
    if (!opt.phase1 && b.pose_len() == 0)
        fail("shape-mismatch", "pose segment empty outside phase-1 mode");
    std::vector<PositionId> pos = assign_positions(layout);
    // phase-1 layouts have no pose segments: drop the pose grid positions
    if (opt.phase1) {
        std::vector<PositionId> trimmed(pos.begin(), pos.begin() + layout.text_len);
        trimmed.insert(trimmed.end(), pos.end() - static_cast<long>(gw) * gh, pos.end());
        pos = std::move(trimmed);
    }
    b.positions = std::move(pos);

    b.kinds.assign(b.text_len(), Kind::text);
    b.kinds.insert(b.kinds.end(), b.ctx_len(), Kind::pose_ctx);
    b.kinds.insert(b.kinds.end(), b.pose_len(), Kind::pose);
    b.kinds.insert(b.kinds.end(), b.img_len(), Kind::image);

    b.t_mod = Vec<S>::Zero(b.total());
    for (int i = 0; i < b.total(); ++i) {
        if (b.kinds[i] == Kind::pose) b.t_mod(i) = t_pose;
        if (b.kinds[i] == Kind::image) b.t_mod(i) = t_img;
    }
    require(static_cast<int>(b.positions.size()) == b.total(), "shape-mismatch",
            "position count mismatch");
    return b;
}

}  // namespace ppc::seq
