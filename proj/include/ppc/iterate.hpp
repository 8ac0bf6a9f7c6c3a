#pragma once
// iterate.hpp — person-by-person generation: stage prompts, per-stage
// denoising with classifier-free guidance, pose-only state propagation,
// and trace export.

#include "ppc/common.hpp"
#include "ppc/flow.hpp"
#include "ppc/model.hpp"
#include "ppc/seq.hpp"
#include "ppc/world.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace ppc::iterate {

struct GenOptions {
    bool single_pass = false;    // ablation: all people in one stage, no context
    bool text_tau_zero = false;  // ablation: strip tau from text positions
    bool reuse_noise = false;    // same initial noise stream for every stage
    bool keep_images = true;     // store intermediate images in the trace
    double snap_eps = 0.1;       // |v + 1| < eps snaps to background
};

template <typename S>
struct StageTrace {
    int stage = 1;
    Raster<S> pose;   // cleaned P_i (this exact raster feeds stage i+1)
    Raster<S> image;  // denoised image (discarded below the final stage)
    double wall_ms = 0.0;
    uint64_t noise_stream = 0;
    int model_evals = 0;
};

template <typename S>
struct GenerationTrace {
    std::vector<StageTrace<S>> stages;
    Raster<S> final_pose, final_image;
    uint64_t seed = 0;
    int num_people = 0;
    int model_evals = 0;
};

// Prompt-side stage input: text of persons 1..upto, their boxes, global
// summary. Targets stay empty; context_pose is filled by the caller.
inline world::StageSample make_prompt(const world::SceneSpec& spec, int upto, int stage,
                                      int num_stages) {
    require(upto >= 1 && upto <= spec.num_people(), "bad-config", "person range invalid");
    world::StageSample s;
    s.stage = stage;
    s.num_stages = num_stages;
    s.global_tokens = spec.global_tokens;
    for (int i = 0; i < upto; ++i) {
        const auto& p = spec.people[static_cast<size_t>(i)];
        s.text_tokens.insert(s.text_tokens.end(), p.desc_tokens.begin(), p.desc_tokens.end());
        s.boxes.push_back(p.box);
    }
    s.canvas_h = spec.canvas_h;
    s.canvas_w = spec.canvas_w;
    s.patch = spec.patch;
    s.context_pose = Rasterd(world::kPoseChannels, spec.canvas_h, spec.canvas_w);
    return s;
}

template <typename S>
void snap_background(Raster<S>& r, S eps) {
    for (Eigen::Index i = 0; i < r.data.rows(); ++i)
        for (Eigen::Index j = 0; j < r.data.cols(); ++j)
            if (std::abs(r.data(i, j) + S(1)) < eps) r.data(i, j) = S(-1);
}

// One denoising stage: joint pose+image Euler sampling from fresh noise,
// conditioned on clean context pose and text. Deterministic given the rng.
template <typename S>
StageTrace<S> generate_stage(const model::ModelConfig& cfg,
                             const model::ModelParams<S>& params,
                             const world::StageSample& prompt, const flow::SampleConfig& scfg,
                             const GenOptions& opt, Rng noise_rng) {
    scfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const int H = prompt.canvas_h, W = prompt.canvas_w, p = prompt.patch;

    Raster<S> x0_pose = flow::noise_raster<S>(world::kPoseChannels, H, W, noise_rng);
    Raster<S> x0_img = flow::noise_raster<S>(3, H, W, noise_rng);

    seq::AssembleOptions ao;
    ao.text_tau_zero = opt.text_tau_zero;
    seq::TokenBatch<S> cond = seq::assemble_sequence<S>(prompt, x0_pose, x0_img, S(1), S(1), ao);
    ao.drop_text = true;
    seq::TokenBatch<S> uncond =
        seq::assemble_sequence<S>(prompt, x0_pose, x0_img, S(1), S(1), ao);

    rope::RopeTables tables =
        rope::build_rope_tables(cfg.head_dim, cfg.rope_split, cfg.rope_base);
    rope::RopeCache cache = rope::build_rope_cache(cond.positions, tables);

    const int n_pose = cond.pose_len(), n_img = cond.img_len();
    auto set_state = [&](seq::TokenBatch<S>& b, const Mat<S>& state, S t) {
        b.pose_patches = state.topRows(n_pose);
        b.img_patches = state.bottomRows(n_img);
        for (int i = 0; i < b.total(); ++i)
            if (b.kinds[static_cast<size_t>(i)] == seq::Kind::pose ||
                b.kinds[static_cast<size_t>(i)] == seq::Kind::image)
                b.t_mod(i) = t;
    };
    int evals = 0;
    auto evaluate = [&](seq::TokenBatch<S>& b, const Mat<S>& state, S t) {
        set_state(b, state, t);
        tape::Tape<S> tp(false);
        model::BoundParams<S> bp = model::bind_params(tp, params);
        model::ForwardVars<S> fv = model::forward_tape(tp, cfg, bp, b, cache);
        require(fv.has_pose, "shape-mismatch", "generation requires a pose segment");
        Mat<S> v(n_pose + n_img, state.cols());
        v.topRows(n_pose) = tp.val(fv.v_pose);
        v.bottomRows(n_img) = tp.val(fv.v_img);
        ++evals;
        return v;
    };
    const S g = S(scfg.guidance);
    std::function<Mat<S>(const Mat<S>&, S)> velocity = [&](const Mat<S>& state, S t) {
        Mat<S> vc = evaluate(cond, state, t);
        if (g == S(1)) return vc;  // guidance 1: conditional pass only
        Mat<S> vu = evaluate(uncond, state, t);
        return flow::cfg_combine(vc, vu, g);
    };

    Mat<S> x(n_pose + n_img, cond.pose_patches.cols());
    x.topRows(n_pose) = seq::patchify(x0_pose, p);
    x.bottomRows(n_img) = seq::patchify(x0_img, p);
    x = flow::euler_sample<S>(velocity, std::move(x), scfg);

    StageTrace<S> out;
    out.stage = prompt.stage;
    out.pose = seq::unpatchify<S>(x.topRows(n_pose), world::kPoseChannels, cond.grid_w,
                                  cond.grid_h, p);
    snap_background(out.pose, S(opt.snap_eps));
    out.image = seq::unpatchify<S>(x.bottomRows(n_img), 3, cond.grid_w, cond.grid_h, p);
    out.model_evals = evals;
    out.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            t0)
                      .count();
    return out;
}

// Full iterative generation: stage i adds person i conditioned on the clean
// P_{i-1} and the text of persons 1..i. Only the pose raster and the growing
// text cross stage boundaries; images below stage N are discarded.
template <typename S>
GenerationTrace<S> generate_scene(const model::ModelConfig& cfg,
                                  const model::ModelParams<S>& params,
                                  const world::SceneSpec& spec, const flow::SampleConfig& scfg,
                                  const GenOptions& opt = {}) {
    require(spec.num_people() >= 1, "bad-config", "scene must contain at least one person");
    const int N = spec.num_people();
    GenerationTrace<S> trace;
    trace.seed = scfg.seed;
    trace.num_people = N;
    Rng rng(scfg.seed);

    const int stages = opt.single_pass ? 1 : N;
    Raster<S> context(world::kPoseChannels, spec.canvas_h, spec.canvas_w);
    for (int i = 1; i <= stages; ++i) {
        world::StageSample prompt = opt.single_pass ? make_prompt(spec, N, 1, 1)
                                                    : make_prompt(spec, i, i, N);
        prompt.context_pose = context.template cast<double>();
        const uint64_t stream = opt.reuse_noise ? 0 : static_cast<uint64_t>(i);
        StageTrace<S> st = generate_stage<S>(cfg, params, prompt, scfg, opt, rng.fork(stream));
        st.noise_stream = stream;
        context = st.pose;  // pose-only state propagation
        trace.model_evals += st.model_evals;
        if (!opt.keep_images && i != stages) st.image = Raster<S>();
        trace.stages.push_back(std::move(st));
    }
    trace.final_pose = trace.stages.back().pose;
    trace.final_image = trace.stages.back().image;
    return trace;
}

// ---- trace export -----------------------------------------------------------

// P6 pixmap; channels mapped [-1, 1] -> [0, 255]. Rasters with != 3 channels
// are rejected (both pose and rgb rasters here carry 3).
template <typename S>
void write_ppm(const Raster<S>& r, const std::string& path) {
    require(r.channels == 3, "bad-config", "ppm export expects 3 channels");
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "io-error", "cannot open " + path);
    f << "P6\n" << r.w << " " << r.h << "\n255\n";
    for (int y = 0; y < r.h; ++y)
        for (int x = 0; x < r.w; ++x)
            for (int c = 0; c < 3; ++c) {
                double v = (static_cast<double>(r.at(c, y, x)) + 1.0) * 127.5;
                f.put(static_cast<char>(static_cast<unsigned char>(
                    std::lround(std::min(255.0, std::max(0.0, v))))));
            }
    require(f.good(), "io-error", "write failed for " + path);
}

template <typename S>
void export_trace(const GenerationTrace<S>& trace, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, "io-error", "cannot create " + dir);
    std::ofstream m(dir + "/manifest.txt");
    require(m.good(), "io-error", "cannot open manifest");
    m << "seed " << trace.seed << "\n";
    m << "num_people " << trace.num_people << "\n";
    m << "model_evals " << trace.model_evals << "\n";
    m << "stages " << trace.stages.size() << "\n";
    for (const auto& st : trace.stages) {
        const std::string tag = "stage_" + std::to_string(st.stage);
        write_ppm(st.pose, dir + "/" + tag + "_pose.ppm");
        if (st.image.channels == 3) write_ppm(st.image, dir + "/" + tag + "_image.ppm");
        m << tag << " noise_stream=" << st.noise_stream << " model_evals=" << st.model_evals
          << " wall_ms=" << st.wall_ms << "\n";
    }
    write_ppm(trace.final_pose, dir + "/final_pose.ppm");
    write_ppm(trace.final_image, dir + "/final_image.ppm");
    require(m.good(), "io-error", "manifest write failed");
}

}  // namespace ppc::iterate
