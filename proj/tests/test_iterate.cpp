#include "ppc/iterate.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ppc;

namespace {

model::ModelConfig tiny_cfg() {
    model::ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_blocks = 1;
    cfg.n_heads = 1;
    cfg.head_dim = 16;
    cfg.lora_rank = 4;
    cfg.rope_split = {4, 6, 6};
    return cfg;
}

// phase-2 parameter set; at init the whole model outputs exactly zero
// velocity, so the sampler returns its own initial noise (after snapping)
model::ModelParams<double> zero_model(const model::ModelConfig& cfg) {
    Rng rng(3);
    model::ModelParams<double> p = model::init_params<double>(cfg, rng);
    model::init_pose_stream(p, rng);
    return p;
}

world::SceneSpec scene2(uint64_t seed = 15) {
    world::WorldConfig wc;
    wc.canvas_h = wc.canvas_w = 16;
    wc.num_people = 2;
    wc.allow_overlap = true;
    return world::gen_scene(seed, wc);
}

}  // namespace

TEST_CASE("make_prompt grows the text prefix and carries scene geometry") {
    world::SceneSpec spec = scene2();
    world::StageSample s1 = iterate::make_prompt(spec, 1, 1, 2);
    world::StageSample s2 = iterate::make_prompt(spec, 2, 2, 2);

    CHECK(s1.text_tokens.size() == world::kDescLen);
    CHECK(s2.text_tokens.size() == 2 * world::kDescLen);
    CHECK(std::equal(s1.text_tokens.begin(), s1.text_tokens.end(), s2.text_tokens.begin()));
    CHECK(s1.text_tokens == spec.people[0].desc_tokens);
    CHECK(s2.global_tokens == spec.global_tokens);
    CHECK(s1.boxes.size() == 1);
    CHECK(s2.boxes.size() == 2);
    CHECK(s2.stage == 2);
    CHECK(s2.num_stages == 2);
    CHECK(s1.context_pose.channels == world::kPoseChannels);
    CHECK(s1.context_pose.data.maxCoeff() == -1.0);  // caller fills context later
    CHECK(!s1.target_image.has_value());
    CHECK_THROWS_AS(iterate::make_prompt(spec, 3, 1, 2), Error);
    CHECK_THROWS_AS(iterate::make_prompt(spec, 0, 1, 2), Error);
}

TEST_CASE("snap_background snaps near-background values exactly") {
    Rasterd r(3, 2, 2, 0.0);
    r.at(0, 0, 0) = -0.95;
    r.at(0, 0, 1) = -1.05;
    r.at(1, 1, 0) = -0.85;  // outside eps
    r.at(2, 1, 1) = 0.4;
    iterate::snap_background(r, 0.1);
    CHECK(r.at(0, 0, 0) == -1.0);
    CHECK(r.at(0, 0, 1) == -1.0);
    CHECK(r.at(1, 1, 0) == -0.85);
    CHECK(r.at(2, 1, 1) == 0.4);
}

TEST_CASE("generation is deterministic in the seed") {
    model::ModelConfig cfg = tiny_cfg();
    model::ModelParams<double> p = zero_model(cfg);
    Rng jr(9);
    model::jitter_params(p, jr);
    world::SceneSpec spec = scene2();
    flow::SampleConfig sc;
    sc.steps = 2;
    sc.guidance = 2.0;
    sc.seed = 123;

    auto a = iterate::generate_scene<double>(cfg, p, spec, sc);
    auto b = iterate::generate_scene<double>(cfg, p, spec, sc);
    CHECK(a.final_pose == b.final_pose);
    CHECK(a.final_image == b.final_image);
    REQUIRE(a.stages.size() == 2);
    CHECK(a.stages[0].pose == b.stages[0].pose);

    flow::SampleConfig sc2 = sc;
    sc2.seed = 124;
    auto c = iterate::generate_scene<double>(cfg, p, spec, sc2);
    CHECK(a.final_pose.data != c.final_pose.data);
}

TEST_CASE("model evaluation counts: stages x steps x passes") {
    model::ModelConfig cfg = tiny_cfg();
    model::ModelParams<double> p = zero_model(cfg);
    world::SceneSpec spec = scene2();
    flow::SampleConfig sc;
    sc.steps = 3;
    sc.guidance = 4.0;
    sc.seed = 5;

    auto guided = iterate::generate_scene<double>(cfg, p, spec, sc);
    CHECK(guided.model_evals == 2 * 3 * 2);  // cond + uncond per step
    for (const auto& st : guided.stages) CHECK(st.model_evals == 6);

    sc.guidance = 1.0;  // conditional pass only
    auto plain = iterate::generate_scene<double>(cfg, p, spec, sc);
    CHECK(plain.model_evals == 2 * 3);

    iterate::GenOptions opt;
    opt.single_pass = true;
    sc.guidance = 4.0;
    auto single = iterate::generate_scene<double>(cfg, p, spec, sc, opt);
    CHECK(single.stages.size() == 1);
    CHECK(single.model_evals == 3 * 2);
    CHECK(single.num_people == 2);
}

TEST_CASE("per-stage noise comes from forked streams keyed by stage") {
    model::ModelConfig cfg = tiny_cfg();
    model::ModelParams<double> p = zero_model(cfg);  // zero velocity everywhere
    world::SceneSpec spec = scene2();
    flow::SampleConfig sc;
    sc.steps = 4;
    sc.guidance = 4.0;
    sc.seed = 999;

    auto trace = iterate::generate_scene<double>(cfg, p, spec, sc);
    REQUIRE(trace.stages.size() == 2);
    CHECK(trace.stages[0].noise_stream == 1);
    CHECK(trace.stages[1].noise_stream == 2);

    // with v == 0 the sampler hands back its initial noise; replay the
    // documented stream derivation Rng(seed).fork(stage)
    for (int stage = 1; stage <= 2; ++stage) {
        Rng fork = Rng(sc.seed).fork(static_cast<uint64_t>(stage));
        Rasterd want = flow::noise_raster<double>(world::kPoseChannels, 16, 16, fork);
        iterate::snap_background(want, 0.1);
        CHECK(trace.stages[size_t(stage - 1)].pose == want);
    }

    // reuse_noise pins every stage to stream 0 -> identical zero-model output
    iterate::GenOptions opt;
    opt.reuse_noise = true;
    auto reused = iterate::generate_scene<double>(cfg, p, spec, sc, opt);
    CHECK(reused.stages[0].noise_stream == 0);
    CHECK(reused.stages[1].noise_stream == 0);
    CHECK(reused.stages[0].pose == reused.stages[1].pose);
}

TEST_CASE("keep_images=false drops only intermediate images") {
    model::ModelConfig cfg = tiny_cfg();
    model::ModelParams<double> p = zero_model(cfg);
    world::SceneSpec spec = scene2();
    flow::SampleConfig sc;
    sc.steps = 1;
    sc.guidance = 1.0;
    iterate::GenOptions opt;
    opt.keep_images = false;

    auto trace = iterate::generate_scene<double>(cfg, p, spec, sc, opt);
    CHECK(trace.stages[0].image.channels == 0);  // cleared
    CHECK(trace.stages[1].image.channels == 3);  // final image kept
    CHECK(trace.final_image.channels == 3);
}

TEST_CASE("generation needs a pose stream in the parameters") {
    model::ModelConfig cfg = tiny_cfg();
    Rng rng(4);
    model::ModelParams<double> p1 = model::init_params<double>(cfg, rng);  // phase 1 only
    world::SceneSpec spec = scene2();
    flow::SampleConfig sc;
    sc.steps = 1;
    CHECK_THROWS_AS(iterate::generate_scene<double>(cfg, p1, spec, sc), Error);
}

TEST_CASE("ppm export maps [-1,1] to [0,255] with clamping") {
    Rasterd r(3, 1, 2);
    r.at(0, 0, 0) = -1.0;
    r.at(1, 0, 0) = 0.0;
    r.at(2, 0, 0) = 1.0;
    r.at(0, 0, 1) = 2.0;   // clamps to 255
    r.at(1, 0, 1) = -3.0;  // clamps to 0
    r.at(2, 0, 1) = -1.0;
    const std::string path = "ppm_test_tmp.ppm";
    iterate::write_ppm(r, path);

    std::ifstream f(path, std::ios::binary);
    std::string magic, dims, maxv;
    std::getline(f, magic);
    std::getline(f, dims);
    std::getline(f, maxv);
    CHECK(magic == "P6");
    CHECK(dims == "2 1");
    CHECK(maxv == "255");
    unsigned char px[6];
    f.read(reinterpret_cast<char*>(px), 6);
    CHECK(px[0] == 0);    // -1
    CHECK(px[1] == 128);  // 0 -> 127.5 -> round half up
    CHECK(px[2] == 255);  // +1
    CHECK(px[3] == 255);
    CHECK(px[4] == 0);
    CHECK(px[5] == 0);
    f.close();
    std::filesystem::remove(path);

    Rasterd mono(1, 2, 2);
    CHECK_THROWS_AS(iterate::write_ppm(mono, path), Error);
}

TEST_CASE("export_trace writes the manifest and stage imagery") {
    model::ModelConfig cfg = tiny_cfg();
    model::ModelParams<double> p = zero_model(cfg);
    world::SceneSpec spec = scene2();
    flow::SampleConfig sc;
    sc.steps = 1;
    sc.guidance = 4.0;
    sc.seed = 77;
    iterate::GenOptions opt;
    opt.keep_images = false;

    auto trace = iterate::generate_scene<double>(cfg, p, spec, sc, opt);
    const std::string dir = "trace_test_tmp";
    std::filesystem::remove_all(dir);
    iterate::export_trace(trace, dir);

    namespace fs = std::filesystem;
    CHECK(fs::exists(dir + "/manifest.txt"));
    CHECK(fs::exists(dir + "/stage_1_pose.ppm"));
    CHECK(!fs::exists(dir + "/stage_1_image.ppm"));  // dropped intermediate
    CHECK(fs::exists(dir + "/stage_2_pose.ppm"));
    CHECK(fs::exists(dir + "/stage_2_image.ppm"));
    CHECK(fs::exists(dir + "/final_pose.ppm"));
    CHECK(fs::exists(dir + "/final_image.ppm"));

    std::ifstream m(dir + "/manifest.txt");
    std::stringstream ss;
    ss << m.rdbuf();
    const std::string text = ss.str();
    CHECK(text.find("seed 77") != std::string::npos);
    CHECK(text.find("num_people 2") != std::string::npos);
    CHECK(text.find("model_evals 4") != std::string::npos);  // 2 stages x 1 step x 2
    CHECK(text.find("stages 2") != std::string::npos);
    CHECK(text.find("stage_1 noise_stream=1") != std::string::npos);
    std::filesystem::remove_all(dir);
}
