#pragma once
// checkpoint.hpp — bit-exact binary checkpoints.
//
// Layout: magic "PPC1", u32 record count, then per record: u16 name length,
// UTF-8 name, u8 dtype (0 = f32, 1 = f64), u8 rank, u32 dims[rank],
// little-endian raw data (row-major). Rank-0 records carry no data and act
// as markers: "frozen:<tensor>" and "decay:<tensor>" encode the masks, and
// a leading rank-1 f64 "meta/config" record self-describes the model.

#include "ppc/common.hpp"
#include "ppc/model.hpp"

#include <cstring>
#include <string>
#include <vector>

namespace ppc::ckpt {

struct Record {
    std::string name;
    uint8_t dtype = 1;  // 0 = f32, 1 = f64
    std::vector<uint32_t> dims;
    std::vector<unsigned char> bytes;
};

void write_records(const std::string& path, const std::vector<Record>& records);
std::vector<Record> read_records(const std::string& path);

namespace detail {

template <typename S>
constexpr uint8_t dtype_code() {
    static_assert(std::is_same_v<S, float> || std::is_same_v<S, double>,
                  "checkpoint supports f32/f64 only");
    return std::is_same_v<S, float> ? 0 : 1;
}

inline constexpr int kConfigValues = 13;

inline Record config_record(const model::ModelConfig& c) {
    Record r;
    r.name = "meta/config";
    r.dtype = 1;
    r.dims = {kConfigValues};
    double v[kConfigValues] = {static_cast<double>(c.d_model),
                               static_cast<double>(c.n_blocks),
                               static_cast<double>(c.n_heads),
                               static_cast<double>(c.head_dim),
                               static_cast<double>(c.mlp_ratio),
                               static_cast<double>(c.vocab),
                               static_cast<double>(c.patch),
                               static_cast<double>(c.lora_rank),
                               static_cast<double>(c.rope_split.tau),
                               static_cast<double>(c.rope_split.x),
                               static_cast<double>(c.rope_split.y),
                               c.rope_base,
                               c.ln_eps};
    r.bytes.resize(sizeof(v));
    std::memcpy(r.bytes.data(), v, sizeof(v));
    return r;
}

inline model::ModelConfig decode_config(const Record& r) {
    require(r.dtype == 1 && r.dims.size() == 1 && r.dims[0] == kConfigValues, "bad-header",
            "malformed meta/config record");
    double v[kConfigValues];
    std::memcpy(v, r.bytes.data(), sizeof(v));
    model::ModelConfig c;
    c.d_model = static_cast<int>(v[0]);
    c.n_blocks = static_cast<int>(v[1]);
    c.n_heads = static_cast<int>(v[2]);
    c.head_dim = static_cast<int>(v[3]);
    c.mlp_ratio = static_cast<int>(v[4]);
    c.vocab = static_cast<int>(v[5]);
    c.patch = static_cast<int>(v[6]);
    c.lora_rank = static_cast<int>(v[7]);
    c.rope_split = {static_cast<int>(v[8]), static_cast<int>(v[9]), static_cast<int>(v[10])};
    c.rope_base = v[11];
    c.ln_eps = v[12];
    return c;
}

}  // namespace detail

template <typename S>
void save_params(const model::ModelParams<S>& p, const std::string& path) {
    std::vector<Record> recs;
    recs.push_back(detail::config_record(p.cfg));
    for (const auto& name : p.order) {
        const Mat<S>& m = p.tensors.at(name);
        Record r;
        r.name = name;
        r.dtype = detail::dtype_code<S>();
        r.dims = {static_cast<uint32_t>(m.rows()), static_cast<uint32_t>(m.cols())};
        r.bytes.resize(static_cast<size_t>(m.size()) * sizeof(S));
        S* out = reinterpret_cast<S*>(r.bytes.data());
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) *out++ = m(i, j);
        recs.push_back(std::move(r));
    }
    for (const auto& name : p.order) {
        if (p.is_frozen(name)) recs.push_back({"frozen:" + name, 1, {}, {}});
        if (p.decays(name)) recs.push_back({"decay:" + name, 1, {}, {}});
    }
    write_records(path, recs);
}

template <typename S>
model::ModelParams<S> load_params(const std::string& path) {
    std::vector<Record> recs = read_records(path);
    require(!recs.empty() && recs[0].name == "meta/config", "bad-header",
            "checkpoint must start with meta/config");
    model::ModelParams<S> p;
    p.cfg = detail::decode_config(recs[0]);
    for (size_t i = 1; i < recs.size(); ++i) {
        const Record& r = recs[i];
        if (r.dims.empty()) {  // marker record
            const auto split = r.name.find(':');
            require(split != std::string::npos, "bad-header",
                    "marker record without prefix: " + r.name);
            const std::string kind = r.name.substr(0, split);
            const std::string target = r.name.substr(split + 1);
            require(p.has(target), "bad-header", "marker for unknown tensor " + target);
            if (kind == "frozen")
                p.frozen.insert(target);
            else if (kind == "decay")
                p.decay.insert(target);
            else
                fail("bad-header", "unknown marker kind " + kind);
            continue;
        }
        require(r.dims.size() == 2, "bad-header", "tensor record must be rank 2: " + r.name);
        Mat<S> m(static_cast<Eigen::Index>(r.dims[0]), static_cast<Eigen::Index>(r.dims[1]));
        if (r.dtype == detail::dtype_code<S>()) {
            const S* in = reinterpret_cast<const S*>(r.bytes.data());
            for (Eigen::Index a = 0; a < m.rows(); ++a)
                for (Eigen::Index b = 0; b < m.cols(); ++b) m(a, b) = *in++;
        } else if (r.dtype == 0) {
            const float* in = reinterpret_cast<const float*>(r.bytes.data());
            for (Eigen::Index a = 0; a < m.rows(); ++a)
                for (Eigen::Index b = 0; b < m.cols(); ++b) m(a, b) = static_cast<S>(*in++);
        } else {
            const double* in = reinterpret_cast<const double*>(r.bytes.data());
            for (Eigen::Index a = 0; a < m.rows(); ++a)
                for (Eigen::Index b = 0; b < m.cols(); ++b) m(a, b) = static_cast<S>(*in++);
        }
        p.add(r.name, std::move(m), false);  // decay mask restored from markers
    }
    return p;
}

// save followed by load; bit-identical for matching scalar types
template <typename S>
model::ModelParams<S> checkpoint_roundtrip(const model::ModelParams<S>& p,
                                           const std::string& path) {
    save_params(p, path);
    return load_params<S>(path);
}

}  // namespace ppc::ckpt
