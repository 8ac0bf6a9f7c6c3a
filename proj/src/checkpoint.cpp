#include "ppc/checkpoint.hpp"

#include <bit>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace ppc::ckpt {

namespace {

constexpr char kMagic[4] = {'P', 'P', 'C', '1'};

void put_u16(std::ostream& os, uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); }
void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void put_u8(std::ostream& os, uint8_t v) { os.write(reinterpret_cast<const char*>(&v), 1); }

size_t element_size(uint8_t dtype) {
    require(dtype == 0 || dtype == 1, "bad-header",
            "unknown dtype code " + std::to_string(dtype));
    return dtype == 0 ? 4 : 8;
}

struct Reader {
    std::ifstream f;
    size_t offset = 0;

    explicit Reader(const std::string& path) : f(path, std::ios::binary) {
        require(f.good(), "io-error", "cannot open checkpoint " + path);
    }
    void read(void* dst, size_t n) {
        f.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
        require(static_cast<size_t>(f.gcount()) == n, "truncated-checkpoint",
                "unexpected end of file at offset " + std::to_string(offset));
        offset += n;
    }
    uint8_t u8() {
        uint8_t v;
        read(&v, 1);
        return v;
    }
    uint16_t u16() {
        uint16_t v;
        read(&v, 2);
        return v;
    }
    uint32_t u32() {
        uint32_t v;
        read(&v, 4);
        return v;
    }
};

}  // namespace

void write_records(const std::string& path, const std::vector<Record>& records) {
    std::ofstream f(path, std::ios::binary);
    require(f.good(), "io-error", "cannot open checkpoint " + path);
    f.write(kMagic, 4);
    put_u32(f, static_cast<uint32_t>(records.size()));
    for (const auto& r : records) {
        require(r.name.size() <= 0xffff, "bad-config", "record name too long");
        require(r.dims.size() <= 0xff, "bad-config", "record rank too large");
        put_u16(f, static_cast<uint16_t>(r.name.size()));
        f.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
        put_u8(f, r.dtype);
        put_u8(f, static_cast<uint8_t>(r.dims.size()));
        size_t count = r.dims.empty() ? 0 : 1;
        for (uint32_t d : r.dims) {
            put_u32(f, d);
            count *= d;
        }
        require(r.bytes.size() == count * element_size(r.dtype), "bad-config",
                "payload size does not match dims for " + r.name);
        f.write(reinterpret_cast<const char*>(r.bytes.data()),
                static_cast<std::streamsize>(r.bytes.size()));
    }
    require(f.good(), "io-error", "checkpoint write failed for " + path);
}

std::vector<Record> read_records(const std::string& path) {
    Reader in(path);
    char magic[4];
    in.read(magic, 4);
    require(std::memcmp(magic, kMagic, 4) == 0, "bad-magic",
            "not a checkpoint file: " + path);
    const uint32_t count = in.u32();
    std::vector<Record> records;
    records.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        Record r;
        const uint16_t name_len = in.u16();
        r.name.resize(name_len);
        if (name_len) in.read(r.name.data(), name_len);
        r.dtype = in.u8();
        const uint8_t rank = in.u8();
        size_t elems = rank ? 1 : 0;
        for (uint8_t d = 0; d < rank; ++d) {
            r.dims.push_back(in.u32());
            elems *= r.dims.back();
        }
        r.bytes.resize(elems * element_size(r.dtype));
        if (!r.bytes.empty()) in.read(r.bytes.data(), r.bytes.size());
        records.push_back(std::move(r));
    }
    return records;
}

}  // namespace ppc::ckpt
