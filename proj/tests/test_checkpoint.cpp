#include "ppc/checkpoint.hpp"

#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <vector>

using namespace ppc;

namespace {

model::ModelParams<double> phase2_params(uint64_t seed) {
    model::ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_blocks = 1;
    cfg.n_heads = 1;
    cfg.head_dim = 16;
    cfg.lora_rank = 4;
    cfg.rope_split = {4, 6, 6};
    Rng rng(seed);
    model::ModelParams<double> p = model::init_params<double>(cfg, rng);
    model::jitter_params(p, rng);
    model::init_pose_stream(p, rng);
    return p;
}

struct TmpFile {
    std::string path;
    explicit TmpFile(std::string p) : path(std::move(p)) { std::remove(path.c_str()); }
    ~TmpFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("checkpoint roundtrip restores everything bit-exactly") {
    model::ModelParams<double> p = phase2_params(42);
    TmpFile tmp("ckpt_roundtrip.ppc");
    model::ModelParams<double> q = ckpt::checkpoint_roundtrip(p, tmp.path);

    CHECK(q.cfg.d_model == p.cfg.d_model);
    CHECK(q.cfg.n_blocks == p.cfg.n_blocks);
    CHECK(q.cfg.n_heads == p.cfg.n_heads);
    CHECK(q.cfg.head_dim == p.cfg.head_dim);
    CHECK(q.cfg.lora_rank == p.cfg.lora_rank);
    CHECK(q.cfg.rope_split.tau == p.cfg.rope_split.tau);
    CHECK(q.cfg.rope_split.x == p.cfg.rope_split.x);
    CHECK(q.cfg.rope_base == p.cfg.rope_base);
    CHECK(q.cfg.ln_eps == p.cfg.ln_eps);

    REQUIRE(q.order == p.order);  // layout preserved, not just the set
    for (const auto& name : p.order) {
        CHECK(q.at(name).rows() == p.at(name).rows());
        CHECK((q.at(name) - p.at(name)).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(q.frozen == p.frozen);
    CHECK(q.decay == p.decay);

    // a second save of the loaded params is byte-identical to the first file
    TmpFile tmp2("ckpt_roundtrip2.ppc");
    ckpt::save_params(q, tmp2.path);
    std::ifstream a(tmp.path, std::ios::binary), b(tmp2.path, std::ios::binary);
    std::vector<char> ba((std::istreambuf_iterator<char>(a)), {});
    std::vector<char> bb((std::istreambuf_iterator<char>(b)), {});
    CHECK(ba == bb);
}

TEST_CASE("checkpoint layout: meta first, marker records carry the masks") {
    model::ModelParams<double> p = phase2_params(43);
    TmpFile tmp("ckpt_layout.ppc");
    ckpt::save_params(p, tmp.path);
    std::vector<ckpt::Record> recs = ckpt::read_records(tmp.path);

    REQUIRE(!recs.empty());
    CHECK(recs[0].name == "meta/config");
    CHECK(recs[0].dtype == 1);
    REQUIRE(recs[0].dims.size() == 1);
    CHECK(recs[0].dims[0] == 13);

    size_t frozen_markers = 0, decay_markers = 0, tensors = 0;
    for (size_t i = 1; i < recs.size(); ++i) {
        if (recs[i].dims.empty()) {
            CHECK(recs[i].bytes.empty());
            if (recs[i].name.rfind("frozen:", 0) == 0) ++frozen_markers;
            if (recs[i].name.rfind("decay:", 0) == 0) ++decay_markers;
        } else {
            CHECK(recs[i].dims.size() == 2);
            ++tensors;
        }
    }
    CHECK(tensors == p.order.size());
    CHECK(frozen_markers == p.frozen.size());
    CHECK(decay_markers == p.decay.size());
}

TEST_CASE("f32 and f64 checkpoints cross-load with a plain cast") {
    model::ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_blocks = 1;
    cfg.n_heads = 1;
    cfg.head_dim = 16;
    cfg.rope_split = {4, 6, 6};
    Rng rng(7);
    model::ModelParams<float> pf = model::init_params<float>(cfg, rng);
    TmpFile tmp("ckpt_f32.ppc");
    ckpt::save_params(pf, tmp.path);

    model::ModelParams<double> pd = ckpt::load_params<double>(tmp.path);
    for (const auto& name : pf.order) {
        const Mat<float>& a = pf.at(name);
        const Matd& b = pd.at(name);
        REQUIRE(a.rows() == b.rows());
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            for (Eigen::Index j = 0; j < a.cols(); ++j)
                CHECK(b(i, j) == static_cast<double>(a(i, j)));
    }

    // and back down: f64 file read as f32
    model::ModelParams<double> p64 = phase2_params(44);
    TmpFile tmp2("ckpt_f64.ppc");
    ckpt::save_params(p64, tmp2.path);
    model::ModelParams<float> back = ckpt::load_params<float>(tmp2.path);
    CHECK(back.order == p64.order);
    CHECK(back.at("embed.table")(0, 0) ==
          static_cast<float>(p64.at("embed.table")(0, 0)));
    CHECK(back.frozen == p64.frozen);
}

TEST_CASE("malformed checkpoints are rejected with specific codes") {
    // wrong magic
    TmpFile bad("ckpt_badmagic.ppc");
    {
        std::ofstream f(bad.path, std::ios::binary);
        f << "NOPE then some trailing junk";
    }
    try {
        ckpt::read_records(bad.path);
        FAIL("expected bad-magic");
    } catch (const Error& e) {
        CHECK(std::string(e.code) == "bad-magic");
    }

    // truncated mid-record
    model::ModelParams<double> p = phase2_params(45);
    TmpFile full("ckpt_full.ppc");
    ckpt::save_params(p, full.path);
    std::ifstream in(full.path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    TmpFile cut("ckpt_cut.ppc");
    {
        std::ofstream f(cut.path, std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    try {
        ckpt::read_records(cut.path);
        FAIL("expected truncated-checkpoint");
    } catch (const Error& e) {
        CHECK(std::string(e.code) == "truncated-checkpoint");
    }

    CHECK_THROWS_AS(ckpt::read_records("no_such_file.ppc"), Error);
}

TEST_CASE("load_params validates structure, not just framing") {
    model::ModelConfig cfg;
    ckpt::Record tensor;
    tensor.name = "t";
    tensor.dtype = 1;
    tensor.dims = {2, 2};
    tensor.bytes.resize(32, 0);

    // no meta/config up front
    TmpFile nometa("ckpt_nometa.ppc");
    ckpt::write_records(nometa.path, {tensor});
    CHECK_THROWS_AS(ckpt::load_params<double>(nometa.path), Error);

    // marker referencing a tensor that is not in the file
    TmpFile orphan("ckpt_orphan.ppc");
    ckpt::write_records(orphan.path,
                        {ckpt::detail::config_record(cfg), tensor, {"frozen:nope", 1, {}, {}}});
    CHECK_THROWS_AS(ckpt::load_params<double>(orphan.path), Error);

    // unknown marker kind
    TmpFile weird("ckpt_weird.ppc");
    ckpt::write_records(weird.path,
                        {ckpt::detail::config_record(cfg), tensor, {"shiny:t", 1, {}, {}}});
    CHECK_THROWS_AS(ckpt::load_params<double>(weird.path), Error);

    // rank-1 tensor record
    ckpt::Record r1;
    r1.name = "vec";
    r1.dtype = 1;
    r1.dims = {4};
    r1.bytes.resize(32, 0);
    TmpFile rank1("ckpt_rank1.ppc");
    ckpt::write_records(rank1.path, {ckpt::detail::config_record(cfg), r1});
    CHECK_THROWS_AS(ckpt::load_params<double>(rank1.path), Error);

    // payload size mismatch is caught at write time
    ckpt::Record short_rec = tensor;
    short_rec.bytes.resize(16);
    TmpFile shortf("ckpt_short.ppc");
    CHECK_THROWS_AS(ckpt::write_records(shortf.path, {short_rec}), Error);
}
