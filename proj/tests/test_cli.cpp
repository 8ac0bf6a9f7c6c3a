#include "ppc/cli.hpp"

#include "ppc/checkpoint.hpp"
#include "ppc/world.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <vector>

using namespace ppc;
namespace fs = std::filesystem;

namespace {

int run(std::initializer_list<const char*> args) {
    std::vector<const char*> argv = {"ppc"};
    argv.insert(argv.end(), args.begin(), args.end());
    return cli::dispatch(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const std::string& path) {
    std::ifstream f(path);
    REQUIRE(f.good());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

const char* kTinyModel[] = {"--d-model", "16",      "--n-blocks", "1",
                            "--n-heads", "1",       "--head-dim", "16",
                            "--split-tau", "4",     "--split-x",  "6",
                            "--split-y", "6",       "--lora-rank", "4"};

}  // namespace

TEST_CASE("usage errors exit with code 2") {
    CHECK(run({"no-such-command"}) == 2);
    CHECK(run({"gen-data", "--no-such-flag", "1", "--out", "x"}) == 2);
    CHECK(run({"gen-data"}) == 2);  // --out is required
    CHECK(run({}) == 2);            // a subcommand is required
}

TEST_CASE("parse_people_range accepts N and A..B") {
    CHECK(cli::parse_people_range("3") == std::make_pair(3, 3));
    CHECK(cli::parse_people_range("1..4") == std::make_pair(1, 4));
    CHECK_THROWS_AS(cli::parse_people_range("4..1"), Error);
    CHECK_THROWS_AS(cli::parse_people_range("lots"), Error);
    CHECK_THROWS_AS(cli::parse_people_range(""), Error);
}

TEST_CASE("cli pipeline: gen-data, train both phases, sample, eval, inspect") {
    for (const char* d : {"cli_t_d1", "cli_t_d2", "cli_t_p1", "cli_t_p2", "cli_t_smp",
                          "cli_t_eval", "cli_t_gc", "cli_t_ovr"})
        fs::remove_all(d);

    // ---- gen-data: single-person corpus for phase 1 ----
    REQUIRE(run({"gen-data", "--out", "cli_t_d1", "--scenes", "4", "--people", "1",
                 "--canvas", "16", "--seed", "5"}) == 0);
    CHECK(fs::exists("cli_t_d1/run_manifest.txt"));
    auto d1 = world::load_scenes("cli_t_d1/scenes.txt");
    REQUIRE(d1.size() == 4);
    for (const auto& s : d1) {
        CHECK(s.num_people() == 1);
        CHECK(s.canvas_h == 16);
    }

    // mixed-count corpus for phase 2
    REQUIRE(run({"gen-data", "--out", "cli_t_d2", "--scenes", "4", "--people", "1..2",
                 "--canvas", "16", "--seed", "6", "--allow-overlap"}) == 0);
    auto d2 = world::load_scenes("cli_t_d2/scenes.txt");
    bool saw_two = false;
    for (const auto& s : d2) {
        CHECK(s.num_people() >= 1);
        CHECK(s.num_people() <= 2);
        saw_two = saw_two || s.num_people() == 2;
    }
    CHECK(saw_two);

    // ---- pretrain ----
    std::vector<const char*> pre = {"pretrain", "--data", "cli_t_d1/scenes.txt", "--out",
                                    "cli_t_p1", "--steps", "2",  "--batch", "2",
                                    "--seed", "1"};
    pre.insert(pre.end(), std::begin(kTinyModel), std::end(kTinyModel));
    pre.insert(pre.begin(), "ppc");
    REQUIRE(cli::dispatch(static_cast<int>(pre.size()), pre.data()) == 0);
    CHECK(fs::exists("cli_t_p1/phase1.ppc"));
    std::string metrics = slurp("cli_t_p1/metrics.csv");
    CHECK(metrics.rfind("step,loss_total,loss_pose,loss_img,lr,wall_ms", 0) == 0);
    auto p1 = ckpt::load_params<double>("cli_t_p1/phase1.ppc");
    CHECK(p1.cfg.d_model == 16);
    CHECK(!p1.has("in_proj.pose.w"));
    CHECK(slurp("cli_t_p1/run_manifest.txt").find("command pretrain") != std::string::npos);

    // phase-1 training rejects multi-person data
    CHECK(run({"pretrain", "--data", "cli_t_d2/scenes.txt", "--out", "cli_t_ovr", "--steps",
               "1", "--batch", "1", "--d-model", "16", "--n-blocks", "1", "--n-heads", "1",
               "--head-dim", "16", "--split-tau", "4", "--split-x", "6", "--split-y",
               "6"}) == 1);

    // ---- sampling from a phase-1 checkpoint is a config error ----
    CHECK(run({"sample", "--ckpt", "cli_t_p1/phase1.ppc", "--out", "cli_t_smp",
               "--world-seed", "3", "--people", "2", "--canvas", "16", "--steps", "2"}) == 1);

    // ---- finetune ----
    REQUIRE(run({"finetune", "--ckpt", "cli_t_p1/phase1.ppc", "--data",
                 "cli_t_d2/scenes.txt", "--out", "cli_t_p2", "--steps", "2", "--batch", "2",
                 "--seed", "2"}) == 0);
    CHECK(fs::exists("cli_t_p2/phase2.ppc"));
    auto p2 = ckpt::load_params<double>("cli_t_p2/phase2.ppc");
    CHECK(p2.has("in_proj.pose.w"));
    CHECK(p2.has("lora.0.pose.wq.down"));
    CHECK(p2.is_frozen("embed.table"));
    // the frozen backbone is bit-identical to the phase-1 checkpoint
    CHECK(p2.at("blocks.0.img.attn.wq.w") == p1.at("blocks.0.img.attn.wq.w"));
    CHECK(p2.at("embed.table") == p1.at("embed.table"));

    // ---- sample ----
    fs::remove_all("cli_t_smp");
    REQUIRE(run({"sample", "--ckpt", "cli_t_p2/phase2.ppc", "--out", "cli_t_smp",
                 "--world-seed", "3", "--people", "2", "--canvas", "16", "--steps", "2",
                 "--guidance", "2", "--seed", "11"}) == 0);
    CHECK(fs::exists("cli_t_smp/final_pose.ppm"));
    CHECK(fs::exists("cli_t_smp/final_image.ppm"));
    CHECK(fs::exists("cli_t_smp/stage_2_pose.ppm"));
    std::string manifest = slurp("cli_t_smp/manifest.txt");
    CHECK(manifest.find("num_people 2") != std::string::npos);
    CHECK(manifest.find("model_evals 8") != std::string::npos);  // 2 stages x 2 steps x 2

    // ---- eval ----
    REQUIRE(run({"eval", "--ckpt", "cli_t_p2/phase2.ppc", "--specs", "cli_t_d2/scenes.txt",
                 "--out", "cli_t_eval", "--samples", "2", "--steps", "2", "--guidance", "1",
                 "--seed", "13"}) == 0);
    CHECK(fs::exists("cli_t_eval/report.csv"));
    std::string summary = slurp("cli_t_eval/summary.txt");
    CHECK(summary.find("count_accuracy") != std::string::npos);
    CHECK(summary.find("feature_distance") != std::string::npos);
    std::string csv = slurp("cli_t_eval/report.csv");
    CHECK(csv.rfind("scope,index,", 0) == 0);
    CHECK(csv.find("aggregate,-1,") != std::string::npos);

    // ---- inspect ----
    CHECK(run({"inspect", "--ckpt", "cli_t_p2/phase2.ppc", "--out", "cli_t_gc"}) == 0);
    CHECK(run({"inspect", "--ckpt", "cli_t_d1/scenes.txt", "--out", "cli_t_gc"}) == 1);

    for (const char* d : {"cli_t_d1", "cli_t_d2", "cli_t_p1", "cli_t_p2", "cli_t_smp",
                          "cli_t_eval", "cli_t_gc", "cli_t_ovr"})
        fs::remove_all(d);
}

TEST_CASE("config file values load and flags override them") {
    fs::remove_all("cli_t_cfg");
    {
        std::ofstream f("cli_t_cfg_file.cfg");
        f << "# generation settings\n"
          << "scenes = 2\n"
          << "people = 1\n"
          << "canvas = 16\n"
          << "seed = 9\n";
    }
    REQUIRE(run({"gen-data", "--config", "cli_t_cfg_file.cfg", "--out", "cli_t_cfg",
                 "--scenes", "3"}) == 0);
    auto scenes = world::load_scenes("cli_t_cfg/scenes.txt");
    CHECK(scenes.size() == 3);  // flag wins over the file value
    std::string man = slurp("cli_t_cfg/run_manifest.txt");
    CHECK(man.find("scenes = 3") != std::string::npos);
    CHECK(man.find("config cli_t_cfg_file.cfg") != std::string::npos);

    // unknown keys in the config file fail loudly
    {
        std::ofstream f("cli_t_cfg_file.cfg");
        f << "scenes = 2\nnot_a_real_key = 1\n";
    }
    CHECK(run({"gen-data", "--config", "cli_t_cfg_file.cfg", "--out", "cli_t_cfg"}) == 1);
    // bad values are runtime errors, not crashes
    CHECK(run({"gen-data", "--out", "cli_t_cfg", "--scenes", "0"}) == 1);
    CHECK(run({"gen-data", "--out", "cli_t_cfg", "--scenes", "2", "--people", "9"}) == 1);

    fs::remove_all("cli_t_cfg");
    fs::remove("cli_t_cfg_file.cfg");
}

TEST_CASE("grad-check on a fresh tiny model passes and writes its report") {
    fs::remove_all("cli_t_gc2");
    REQUIRE(run({"grad-check", "--out", "cli_t_gc2", "--seed", "1", "--probes", "2"}) == 0);
    std::string report = slurp("cli_t_gc2/grad_check.txt");
    CHECK(report.find("rel_err") != std::string::npos);
    CHECK(report.find("worst") != std::string::npos);
    CHECK(report.find("PASS") != std::string::npos);
    fs::remove_all("cli_t_gc2");
}
