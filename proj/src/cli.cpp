#include "ppc/cli.hpp"

#include "ppc/checkpoint.hpp"
#include "ppc/config.hpp"
#include "ppc/evalkit.hpp"
#include "ppc/iterate.hpp"
#include "ppc/train.hpp"
#include "ppc/world.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#ifndef PPC_VERSION
#define PPC_VERSION "unversioned"
#endif

namespace ppc::cli {

namespace fs = std::filesystem;

int thread_cap() {
    if (const char* env = std::getenv("PPC_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

std::pair<int, int> parse_people_range(const std::string& text) {
    require(!text.empty(), "bad-config", "empty people range");
    const size_t dots = text.find("..");
    int lo, hi;
    try {
        if (dots == std::string::npos) {
            lo = hi = std::stoi(text);
        } else {
            lo = std::stoi(text.substr(0, dots));
            hi = std::stoi(text.substr(dots + 2));
        }
    } catch (...) {
        fail("bad-config", "people range must be N or A..B, got '" + text + "'");
    }
    require(lo >= 1 && hi >= lo, "bad-config", "people range must satisfy 1 <= A <= B");
    return {lo, hi};
}

void write_manifest(const RunManifest& m, const std::string& path) {
    std::ofstream f(path);
    require(f.good(), "io-error", "cannot write manifest " + path);
    f << "command " << m.command << "\n";
    f << "version " << m.version << "\n";
    f << "seed " << m.seed << "\n";
    f << "config " << (m.config_path.empty() ? "-" : m.config_path) << "\n";
    f << "out " << m.out_dir << "\n";
    f << "threads " << thread_cap() << "\n";
    f << "resolved\n";
    for (const auto& [k, v] : m.resolved) f << "  " << k << " = " << v << "\n";
    require(f.good(), "io-error", "manifest write failed");
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

// Every subcommand routes its flags through the flat config so that
// file-provided keys and flag overrides resolve identically (flag wins).
struct CmdArgs {
    CLI::App* cmd = nullptr;
    std::string config_path, out_dir;
    std::deque<std::pair<std::string, std::string>> binds;  // key, value
    std::deque<CLI::Option*> opts;

    void init(CLI::App* c, bool with_out = true) {
        cmd = c;
        cmd->add_option("--config", config_path, "flat key = value config file");
        if (with_out) cmd->add_option("--out", out_dir, "output directory")->required();
    }
    void add(const std::string& flag, const std::string& key, const std::string& desc) {
        binds.emplace_back(key, "");
        opts.push_back(cmd->add_option(flag, binds.back().second, desc));
    }
    void add_flag(const std::string& flag, const std::string& key, const std::string& desc) {
        binds.emplace_back(key, "true");
        opts.push_back(cmd->add_flag(flag, desc));
    }
    config::Config resolve() const {
        config::Config c = config_path.empty() ? config::Config()
                                               : config::Config::parse_file(config_path);
        for (size_t i = 0; i < binds.size(); ++i)
            if (opts[i]->count()) c.set(binds[i].first, binds[i].second);
        return c;
    }
};

void make_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, "io-error", "cannot create output directory " + dir);
}

model::ModelConfig read_model_config(config::Config& c) {
    model::ModelConfig m;
    m.d_model = c.get_int("d_model", m.d_model);
    m.n_blocks = c.get_int("n_blocks", m.n_blocks);
    m.n_heads = c.get_int("n_heads", m.n_heads);
    m.head_dim = c.get_int("head_dim", m.head_dim);
    m.mlp_ratio = c.get_int("mlp_ratio", m.mlp_ratio);
    m.lora_rank = c.get_int("lora_rank", m.lora_rank);
    m.patch = c.get_int("patch", m.patch);
    m.rope_base = c.get_double("rope_base", m.rope_base);
    m.rope_split.tau = c.get_int("split_tau", m.rope_split.tau);
    m.rope_split.x = c.get_int("split_x", m.rope_split.x);
    m.rope_split.y = c.get_int("split_y", m.rope_split.y);
    m.validate();
    return m;
}

train::TrainConfig read_train_config(config::Config& c, train::Phase phase) {
    train::TrainConfig t;
    t.phase = phase;
    t.lr = c.get_double("lr", t.lr);
    t.weight_decay = c.get_double("weight_decay", t.weight_decay);
    t.batch = c.get_int("batch", t.batch);
    t.steps = c.get_int("steps", t.steps);
    t.lambda_pose = c.get_double("lambda_pose", t.lambda_pose);
    t.lambda_img = c.get_double("lambda_img", t.lambda_img);
    t.p_drop = c.get_double("p_drop", t.p_drop);
    t.seed = c.get_u64("seed", t.seed);
    t.ckpt_every = c.get_int("ckpt_every", t.ckpt_every);
    t.validate();
    return t;
}

void echo_train(RunManifest& man, const train::TrainConfig& t) {
    man.resolved.emplace_back("steps", std::to_string(t.steps));
    man.resolved.emplace_back("batch", std::to_string(t.batch));
    man.resolved.emplace_back("lr", fmt(t.lr));
    man.resolved.emplace_back("weight_decay", fmt(t.weight_decay));
    man.resolved.emplace_back("p_drop", fmt(t.p_drop));
    man.resolved.emplace_back("lambda_pose", fmt(t.lambda_pose));
    man.resolved.emplace_back("lambda_img", fmt(t.lambda_img));
    man.resolved.emplace_back("seed", std::to_string(t.seed));
}

void echo_model(RunManifest& man, const model::ModelConfig& m) {
    man.resolved.emplace_back("d_model", std::to_string(m.d_model));
    man.resolved.emplace_back("n_blocks", std::to_string(m.n_blocks));
    man.resolved.emplace_back("n_heads", std::to_string(m.n_heads));
    man.resolved.emplace_back("head_dim", std::to_string(m.head_dim));
    man.resolved.emplace_back("lora_rank", std::to_string(m.lora_rank));
    man.resolved.emplace_back("patch", std::to_string(m.patch));
    man.resolved.emplace_back("rope_split", std::to_string(m.rope_split.tau) + "," +
                                                std::to_string(m.rope_split.x) + "," +
                                                std::to_string(m.rope_split.y));
}

std::vector<world::StageSample> build_stages(const std::vector<world::SceneSpec>& scenes,
                                             bool phase1) {
    std::vector<world::StageSample> out;
    for (size_t i = 0; i < scenes.size(); ++i) {
        if (phase1)
            require(scenes[i].num_people() == 1, "bad-config",
                    "phase-1 data must be single-person scenes (scene " + std::to_string(i) +
                        " has " + std::to_string(scenes[i].num_people()) + ")");
        std::vector<world::StageSample> stages = world::decompose_stages(scenes[i]);
        if (phase1)
            out.push_back(std::move(stages.back()));
        else
            for (auto& s : stages) out.push_back(std::move(s));
    }
    return out;
}

// ---- subcommands ----

int cmd_gen_data(config::Config& c, const std::string& out, const std::string& cfg_path) {
    const uint64_t seed = c.get_u64("seed", 1);
    const int scenes = c.get_int("scenes", 0);
    auto [lo, hi] = parse_people_range(c.get_str("people", "1"));
    world::WorldConfig wc;
    wc.canvas_h = wc.canvas_w = c.get_int("canvas", 32);
    wc.patch = c.get_int("patch", 2);
    wc.palette_size = c.get_int("palette", 4);
    wc.allow_overlap = c.get_bool("allow_overlap", false);
    wc.allow_duplicates = c.get_bool("allow_duplicates", false);
    c.finish();
    require(scenes >= 1, "bad-config", "--scenes must be >= 1");

    make_out_dir(out);
    RunManifest man{"gen-data", cfg_path, out, PPC_VERSION, seed, {}};
    man.resolved.emplace_back("scenes", std::to_string(scenes));
    man.resolved.emplace_back("people", std::to_string(lo) + ".." + std::to_string(hi));
    man.resolved.emplace_back("canvas", std::to_string(wc.canvas_h));
    man.resolved.emplace_back("palette", std::to_string(wc.palette_size));
    write_manifest(man, out + "/run_manifest.txt");

    Rng rng(seed);
    std::vector<world::SceneSpec> specs;
    while (static_cast<int>(specs.size()) < scenes) {
        wc.num_people = rng.uniform_int(lo, hi);
        const uint64_t scene_seed = rng.next_u64();
        try {
            specs.push_back(world::gen_scene(scene_seed, wc));
        } catch (const Error& e) {
            if (e.code != "placement-infeasible") throw;
            // unlucky draw: count retries so an impossible config still fails
            static thread_local int misses = 0;
            require(++misses < 1000, "placement-infeasible",
                    "cannot place " + std::to_string(wc.num_people) + " people on this canvas");
        }
    }
    const std::string file = out + "/scenes.txt";
    world::save_scenes(file, specs);
    std::cout << "wrote " << specs.size() << " scenes to " << file << "\n";
    return 0;
}

int cmd_pretrain(config::Config& c, const std::string& out, const std::string& cfg_path) {
    const std::string data = c.get_str("data", "");
    require(!data.empty(), "bad-config", "pretrain needs --data (or config key data)");
    model::ModelConfig mcfg = read_model_config(c);
    train::TrainConfig tcfg = read_train_config(c, train::Phase::pretrain);
    c.finish();

    make_out_dir(out);
    RunManifest man{"pretrain", cfg_path, out, PPC_VERSION, tcfg.seed, {}};
    man.resolved.emplace_back("data", data);
    echo_train(man, tcfg);
    echo_model(man, mcfg);
    write_manifest(man, out + "/run_manifest.txt");

    std::vector<world::SceneSpec> scenes = world::load_scenes(data);
    std::vector<world::StageSample> dataset = build_stages(scenes, true);
    Rng init_rng = Rng(tcfg.seed).fork(0x1417);
    model::ModelParams<double> params = model::init_params<double>(mcfg, init_rng);
    train::TrainResult res =
        train::train_phase<double>(tcfg, mcfg, dataset, params, out + "/metrics.csv");
    ckpt::save_params(params, out + "/phase1.ppc");
    std::cout << "pretrain done: " << res.metrics.size() << " steps, final loss "
              << (res.metrics.empty() ? 0.0 : res.metrics.back().loss_total) << "\n";
    return 0;
}

int cmd_finetune(config::Config& c, const std::string& out, const std::string& cfg_path) {
    const std::string data = c.get_str("data", "");
    const std::string ckpt_path = c.get_str("ckpt", "");
    require(!data.empty(), "bad-config", "finetune needs --data");
    require(!ckpt_path.empty(), "bad-config", "finetune needs --ckpt (phase-1 checkpoint)");
    train::TrainConfig tcfg = read_train_config(c, train::Phase::finetune);
    c.finish();

    make_out_dir(out);
    RunManifest man{"finetune", cfg_path, out, PPC_VERSION, tcfg.seed, {}};
    man.resolved.emplace_back("data", data);
    man.resolved.emplace_back("ckpt", ckpt_path);
    echo_train(man, tcfg);
    write_manifest(man, out + "/run_manifest.txt");

    model::ModelParams<double> params = ckpt::load_params<double>(ckpt_path);
    Rng init_rng = Rng(tcfg.seed).fork(0x2417);
    model::init_pose_stream(params, init_rng);
    std::vector<world::SceneSpec> scenes = world::load_scenes(data);
    std::vector<world::StageSample> dataset = build_stages(scenes, false);
    train::TrainResult res = train::train_phase<double>(tcfg, params.cfg, dataset, params,
                                                        out + "/metrics.csv");
    ckpt::save_params(params, out + "/phase2.ppc");
    std::cout << "finetune done: " << res.metrics.size() << " steps, final loss "
              << (res.metrics.empty() ? 0.0 : res.metrics.back().loss_total) << "\n";
    return 0;
}

world::SceneSpec pick_spec(config::Config& c) {
    const std::string specs_path = c.get_str("specs", "");
    if (!specs_path.empty()) {
        const int index = c.get_int("index", 0);
        std::vector<world::SceneSpec> specs = world::load_scenes(specs_path);
        require(index >= 0 && index < static_cast<int>(specs.size()), "bad-config",
                "--index out of range for " + specs_path);
        return specs[static_cast<size_t>(index)];
    }
    world::WorldConfig wc;
    wc.canvas_h = wc.canvas_w = c.get_int("canvas", 32);
    wc.patch = c.get_int("patch", 2);
    wc.palette_size = c.get_int("palette", 4);
    wc.num_people = c.get_int("people", 2);
    return world::gen_scene(c.get_u64("world_seed", 7), wc);
}

int cmd_sample(config::Config& c, const std::string& out, const std::string& cfg_path) {
    const std::string ckpt_path = c.get_str("ckpt", "");
    require(!ckpt_path.empty(), "bad-config", "sample needs --ckpt");
    world::SceneSpec spec = pick_spec(c);
    flow::SampleConfig scfg;
    scfg.steps = c.get_int("steps", scfg.steps);
    scfg.guidance = c.get_double("guidance", scfg.guidance);
    scfg.seed = c.get_u64("seed", 0);
    iterate::GenOptions gopt;
    gopt.single_pass = c.get_bool("single_pass", false);
    gopt.text_tau_zero = c.get_bool("text_tau_zero", false);
    gopt.reuse_noise = c.get_bool("reuse_noise", false);
    gopt.snap_eps = c.get_double("snap_eps", gopt.snap_eps);
    c.finish();

    make_out_dir(out);
    RunManifest man{"sample", cfg_path, out, PPC_VERSION, scfg.seed, {}};
    man.resolved.emplace_back("ckpt", ckpt_path);
    man.resolved.emplace_back("steps", std::to_string(scfg.steps));
    man.resolved.emplace_back("guidance", fmt(scfg.guidance));
    man.resolved.emplace_back("people", std::to_string(spec.num_people()));
    man.resolved.emplace_back("single_pass", gopt.single_pass ? "true" : "false");
    man.resolved.emplace_back("text_tau_zero", gopt.text_tau_zero ? "true" : "false");
    write_manifest(man, out + "/run_manifest.txt");

    model::ModelParams<double> params = ckpt::load_params<double>(ckpt_path);
    require(params.has("in_proj.pose.w"), "bad-config",
            "checkpoint lacks a pose stream; finetune first");
    iterate::GenerationTrace<double> trace =
        iterate::generate_scene<double>(params.cfg, params, spec, scfg, gopt);
    iterate::export_trace(trace, out);
    std::cout << "sampled " << trace.stages.size() << " stages (" << trace.model_evals
              << " model evals) into " << out << "\n";
    return 0;
}

int cmd_eval(config::Config& c, const std::string& out, const std::string& cfg_path) {
    const std::string ckpt_path = c.get_str("ckpt", "");
    const std::string specs_path = c.get_str("specs", "");
    require(!ckpt_path.empty(), "bad-config", "eval needs --ckpt");
    require(!specs_path.empty(), "bad-config", "eval needs --specs");
    const int samples = c.get_int("samples", 5);
    const uint64_t seed = c.get_u64("seed", 0);
    flow::SampleConfig scfg;
    scfg.steps = c.get_int("steps", scfg.steps);
    scfg.guidance = c.get_double("guidance", scfg.guidance);
    iterate::GenOptions gopt;
    gopt.single_pass = c.get_bool("single_pass", false);
    gopt.text_tau_zero = c.get_bool("text_tau_zero", false);
    gopt.keep_images = false;
    evalkit::DiversityConfig dcfg;
    dcfg.palette_size = c.get_int("palette", dcfg.palette_size);
    c.finish();
    require(samples >= 1, "bad-config", "--samples must be >= 1");

    make_out_dir(out);
    RunManifest man{"eval", cfg_path, out, PPC_VERSION, seed, {}};
    man.resolved.emplace_back("ckpt", ckpt_path);
    man.resolved.emplace_back("specs", specs_path);
    man.resolved.emplace_back("samples", std::to_string(samples));
    man.resolved.emplace_back("steps", std::to_string(scfg.steps));
    man.resolved.emplace_back("guidance", fmt(scfg.guidance));
    man.resolved.emplace_back("single_pass", gopt.single_pass ? "true" : "false");
    man.resolved.emplace_back("text_tau_zero", gopt.text_tau_zero ? "true" : "false");
    write_manifest(man, out + "/run_manifest.txt");

    model::ModelParams<double> params = ckpt::load_params<double>(ckpt_path);
    require(params.has("in_proj.pose.w"), "bad-config",
            "checkpoint lacks a pose stream; finetune first");
    std::vector<world::SceneSpec> specs = world::load_scenes(specs_path);
    require(!specs.empty(), "bad-config", "empty spec file");

    std::vector<std::vector<evalkit::GenResult>> results(specs.size());
    Rng root(seed);
    for (size_t i = 0; i < specs.size(); ++i) {
        for (int j = 0; j < samples; ++j) {
            Rng r = root.fork(i * 8192 + static_cast<uint64_t>(j) + 1);
            flow::SampleConfig sc = scfg;
            sc.seed = r.next_u64();
            iterate::GenerationTrace<double> trace =
                iterate::generate_scene<double>(params.cfg, params, specs[i], sc, gopt);
            results[i].push_back({trace.final_pose, trace.final_image});
        }
        std::cout << "spec " << i << ": " << samples << " samples done\n";
    }
    evalkit::EvalReport report;
    report.alignment = evalkit::alignment_metrics(specs, results);
    if (samples >= 2) report.diversity = evalkit::diversity_metrics(specs, results, dcfg);
    evalkit::write_report_csv(report, out + "/report.csv");
    const std::string summary = evalkit::report_summary(report);
    std::ofstream sf(out + "/summary.txt");
    sf << summary;
    require(sf.good(), "io-error", "summary write failed");
    std::cout << summary;
    return 0;
}

void print_grad_report(const std::string& label, const train::GradCheckReport& rep,
                       std::ostream& os) {
    os << label << "\n";
    for (const auto& t : rep.tensors)
        os << "  " << std::left << std::setw(34) << t.name << " rel_err "
           << std::scientific << std::setprecision(3) << t.max_rel_err << std::defaultfloat
           << " (" << t.probes << " probes)\n";
    os << "  worst " << std::scientific << std::setprecision(3) << rep.worst_rel_err
       << std::defaultfloat << "\n";
}

int cmd_grad_check(config::Config& c, const std::string& out, const std::string& cfg_path) {
    const std::string ckpt_path = c.get_str("ckpt", "");
    const uint64_t seed = c.get_u64("seed", 0);
    const double h = c.get_double("h", 1e-5);
    const int probes = c.get_int("probes", 4);
    const double tol = c.get_double("tol", 1e-4);
    c.finish();

    make_out_dir(out);
    RunManifest man{"grad-check", cfg_path, out, PPC_VERSION, seed, {}};
    man.resolved.emplace_back("ckpt", ckpt_path.empty() ? "-" : ckpt_path);
    man.resolved.emplace_back("h", fmt(h));
    man.resolved.emplace_back("probes", std::to_string(probes));
    man.resolved.emplace_back("tol", fmt(tol));
    write_manifest(man, out + "/run_manifest.txt");

    auto one_person_stage = [&](int canvas) {
        world::WorldConfig wc;
        wc.canvas_h = wc.canvas_w = canvas;
        wc.num_people = 1;
        return world::decompose_stages(world::gen_scene(seed + 11, wc)).back();
    };
    auto two_person_stages = [&](int canvas) {
        world::WorldConfig wc;
        wc.canvas_h = wc.canvas_w = canvas;
        wc.num_people = 2;
        return world::decompose_stages(world::gen_scene(seed + 13, wc));
    };

    bool ok = true;
    std::ostringstream report;
    if (!ckpt_path.empty()) {
        model::ModelParams<double> params = ckpt::load_params<double>(ckpt_path);
        const bool phase2 = params.has("in_proj.pose.w");
        world::StageSample sample =
            phase2 ? two_person_stages(24).back() : one_person_stage(16);
        train::GradCheckReport rep = train::grad_check<double>(
            params.cfg, params, sample, !phase2, seed, h, probes);
        print_grad_report(phase2 ? "checkpoint (finetune phase)" : "checkpoint (pretrain phase)",
                          rep, report);
        ok = rep.pass(tol);
    } else {
        model::ModelConfig tiny;
        tiny.d_model = 16;
        tiny.n_blocks = 2;
        tiny.n_heads = 1;
        tiny.head_dim = 16;
        tiny.lora_rank = 4;
        tiny.rope_split = {4, 6, 6};
        Rng rng(seed + 1);
        model::ModelParams<double> params = model::init_params<double>(tiny, rng);
        model::jitter_params(params, rng);  // leave the degenerate zero-gate point
        train::GradCheckReport rep1 = train::grad_check<double>(
            tiny, params, one_person_stage(16), true, seed, h, probes);
        print_grad_report("phase 1 (text+image streams)", rep1, report);
        model::init_pose_stream(params, rng);
        model::jitter_params(params, rng);
        auto stages = two_person_stages(24);
        train::GradCheckReport rep2 = train::grad_check<double>(
            tiny, params, stages.front(), false, seed, h, probes);
        print_grad_report("phase 2, intermediate stage (pose loss only)", rep2, report);
        train::GradCheckReport rep3 = train::grad_check<double>(
            tiny, params, stages.back(), false, seed, h, probes);
        print_grad_report("phase 2, final stage (pose + image loss)", rep3, report);
        ok = rep1.pass(tol) && rep2.pass(tol) && rep3.pass(tol);
    }
    std::ofstream rf(out + "/grad_check.txt");
    rf << report.str() << (ok ? "PASS" : "FAIL") << " (tol " << tol << ")\n";
    std::cout << report.str() << (ok ? "PASS" : "FAIL") << " (tol " << tol << ")\n";
    return ok ? 0 : 1;
}

int cmd_inspect(config::Config& c, const std::string& out, const std::string& cfg_path) {
    const std::string ckpt_path = c.get_str("ckpt", "");
    require(!ckpt_path.empty(), "bad-config", "inspect needs --ckpt");
    c.finish();

    make_out_dir(out);
    RunManifest man{"inspect", cfg_path, out, PPC_VERSION, 0, {}};
    man.resolved.emplace_back("ckpt", ckpt_path);
    write_manifest(man, out + "/run_manifest.txt");

    model::ModelParams<double> params = ckpt::load_params<double>(ckpt_path);
    const auto& m = params.cfg;
    std::ostringstream os;
    os << "model d_model=" << m.d_model << " blocks=" << m.n_blocks << " heads=" << m.n_heads
       << " head_dim=" << m.head_dim << " lora_rank=" << m.lora_rank << " patch=" << m.patch
       << " rope_split=(" << m.rope_split.tau << "," << m.rope_split.x << ","
       << m.rope_split.y << ")\n";
    size_t total = 0, trainable = 0;
    for (const auto& name : params.order) {
        const Mat<double>& t = params.tensors.at(name);
        os << "  " << std::left << std::setw(34) << name << std::right << std::setw(5)
           << t.rows() << " x " << std::left << std::setw(5) << t.cols()
           << (params.is_frozen(name) ? " frozen" : "       ")
           << (params.decays(name) ? " decay" : "") << "\n";
        total += static_cast<size_t>(t.size());
        if (!params.is_frozen(name)) trainable += static_cast<size_t>(t.size());
    }
    os << "total " << total << " parameters, " << trainable << " trainable\n";
    std::cout << os.str();
    std::ofstream tf(out + "/inspect.txt");
    tf << os.str();
    return 0;
}

}  // namespace

int dispatch(int argc, const char* const* argv) {
    CLI::App app{"pose-and-person composition: dual-stream flow-matching DiT on a synthetic "
                 "stick-figure world"};
    app.require_subcommand(1);

    CmdArgs gen, pre, fin, smp, evl, grd, ins;
    gen.init(app.add_subcommand("gen-data", "generate a synthetic scene dataset"));
    gen.add("--seed", "seed", "dataset seed");
    gen.add("--scenes", "scenes", "number of scenes");
    gen.add("--people", "people", "people per scene: N or A..B");
    gen.add("--canvas", "canvas", "square canvas size in pixels");
    gen.add("--patch", "patch", "patch size");
    gen.add("--palette", "palette", "palette size (2..6)");
    gen.add_flag("--allow-overlap", "allow_overlap", "allow overlapping boxes");
    gen.add_flag("--allow-duplicates", "allow_duplicates", "allow duplicate (color, action)");

    pre.init(app.add_subcommand("pretrain", "phase-1 backbone training (text+image)"));
    pre.add("--data", "data", "scenes file from gen-data");
    pre.add("--steps", "steps", "optimizer steps");
    pre.add("--batch", "batch", "batch size");
    pre.add("--lr", "lr", "learning rate");
    pre.add("--weight-decay", "weight_decay", "decoupled weight decay");
    pre.add("--p-drop", "p_drop", "text dropout probability");
    pre.add("--lambda-pose", "lambda_pose", "pose loss weight");
    pre.add("--lambda-img", "lambda_img", "image loss weight");
    pre.add("--seed", "seed", "training seed");
    pre.add("--d-model", "d_model", "model width");
    pre.add("--n-blocks", "n_blocks", "transformer blocks");
    pre.add("--n-heads", "n_heads", "attention heads");
    pre.add("--head-dim", "head_dim", "per-head width");
    pre.add("--lora-rank", "lora_rank", "LoRA rank (used in phase 2)");
    pre.add("--patch", "patch", "patch size");
    pre.add("--split-tau", "split_tau", "rope tau-axis width");
    pre.add("--split-x", "split_x", "rope x-axis width");
    pre.add("--split-y", "split_y", "rope y-axis width");

    fin.init(app.add_subcommand("finetune", "phase-2 pose-stream fine-tune (frozen backbone)"));
    fin.add("--data", "data", "scenes file from gen-data");
    fin.add("--ckpt", "ckpt", "phase-1 checkpoint");
    fin.add("--steps", "steps", "optimizer steps");
    fin.add("--batch", "batch", "batch size");
    fin.add("--lr", "lr", "learning rate");
    fin.add("--weight-decay", "weight_decay", "decoupled weight decay");
    fin.add("--p-drop", "p_drop", "text dropout probability");
    fin.add("--lambda-pose", "lambda_pose", "pose loss weight");
    fin.add("--lambda-img", "lambda_img", "image loss weight");
    fin.add("--seed", "seed", "training seed");

    smp.init(app.add_subcommand("sample", "iterative generation for one scene"));
    smp.add("--ckpt", "ckpt", "phase-2 checkpoint");
    smp.add("--specs", "specs", "scene file (prompt side used)");
    smp.add("--index", "index", "scene index within --specs");
    smp.add("--world-seed", "world_seed", "generate the prompt scene from this seed");
    smp.add("--people", "people", "people count for --world-seed");
    smp.add("--canvas", "canvas", "canvas for --world-seed");
    smp.add("--palette", "palette", "palette for --world-seed");
    smp.add("--patch", "patch", "patch size for --world-seed");
    smp.add("--seed", "seed", "sampling noise seed");
    smp.add("--steps", "steps", "denoising steps");
    smp.add("--guidance", "guidance", "classifier-free guidance scale");
    smp.add("--snap-eps", "snap_eps", "background snap threshold");
    smp.add_flag("--single-pass", "single_pass", "ablation: all people in one stage");
    smp.add_flag("--text-tau-zero", "text_tau_zero", "ablation: text tau forced to 0");
    smp.add_flag("--reuse-noise", "reuse_noise", "reuse the stage-1 noise stream");

    evl.init(app.add_subcommand("eval", "oracle alignment + diversity over a spec set"));
    evl.add("--ckpt", "ckpt", "phase-2 checkpoint");
    evl.add("--specs", "specs", "scene file");
    evl.add("--samples", "samples", "generations per spec");
    evl.add("--seed", "seed", "evaluation seed");
    evl.add("--steps", "steps", "denoising steps");
    evl.add("--guidance", "guidance", "guidance scale");
    evl.add("--palette", "palette", "palette size for entropy normalization");
    evl.add_flag("--single-pass", "single_pass", "evaluate the single-pass ablation");
    evl.add_flag("--text-tau-zero", "text_tau_zero", "evaluate the tau-ablated variant");

    grd.init(app.add_subcommand("grad-check", "finite-difference gradient verification"));
    grd.add("--ckpt", "ckpt", "checkpoint to verify (fresh tiny model when absent)");
    grd.add("--seed", "seed", "probe seed");
    grd.add("--fd-step", "h", "finite-difference step");
    grd.add("--probes", "probes", "probes per tensor");
    grd.add("--tol", "tol", "pass threshold on relative error");

    ins.init(app.add_subcommand("inspect", "print checkpoint parameter table"));
    ins.add("--ckpt", "ckpt", "checkpoint file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    struct Entry {
        CmdArgs* args;
        int (*run)(config::Config&, const std::string&, const std::string&);
    };
    const Entry entries[] = {
        {&gen, cmd_gen_data}, {&pre, cmd_pretrain},   {&fin, cmd_finetune}, {&smp, cmd_sample},
        {&evl, cmd_eval},     {&grd, cmd_grad_check}, {&ins, cmd_inspect},
    };
    for (const Entry& e : entries) {
        if (!e.args->cmd->parsed()) continue;
        try {
            config::Config cfg = e.args->resolve();
            return e.run(cfg, e.args->out_dir, e.args->config_path);
        } catch (const Error& err) {
            std::cerr << "error: " << err.what() << "\n";
            return 1;
        } catch (const std::exception& err) {
            std::cerr << "error: " << err.what() << "\n";
            return 1;
        }
    }
    std::cerr << "error: no subcommand selected\n";
    return 2;
}

}  // namespace ppc::cli
