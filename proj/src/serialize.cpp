#include "promptsr/serialize.hpp"

#include <cstring>
#include <fstream>

namespace promptsr::serialize {

namespace {

constexpr char kMagic[4] = {'P', 'S', 'R', 'W'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& out, uint32_t v) {
    // little-endian
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
                 char((v >> 24) & 0xff)};
    out.write(b, 4);
}

uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw FormatError("truncated stream while reading u32");
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) |
           (uint32_t(b[3]) << 24);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
    put_u32(out, uint32_t(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_u32(out, uint32_t(t.dim(i)));
    static_assert(sizeof(float) == 4);
    out.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.numel() * 4));
}

Tensor read_tensor(std::istream& in) {
    const uint32_t rank = get_u32(in);
    if (rank == 0 || rank > 8) throw FormatError("implausible tensor rank " + std::to_string(rank));
    Shape shape(rank);
    for (uint32_t i = 0; i < rank; ++i) {
        const uint32_t d = get_u32(in);
        if (d == 0 || d > (1u << 28)) throw FormatError("implausible tensor dimension");
        shape[i] = int(d);
    }
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.numel() * 4));
    if (!in) throw FormatError("truncated tensor payload");
    return t;
}

void write_checkpoint(const std::string& path, nn::ParamRegistry& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, uint32_t(params.size()));
    for (auto& p : params) {
        put_u32(out, uint32_t(p.name.size()));
        out.write(p.name.data(), std::streamsize(p.name.size()));
        write_tensor(out, *p.tensor);
    }
    if (!out) throw DataError("failed writing checkpoint: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("not a checkpoint file: " + path);
    if (get_u32(in) != kVersion) throw FormatError("unsupported checkpoint version in " + path);
    const uint32_t count = get_u32(in);
    Checkpoint ckpt;
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t len = get_u32(in);
        if (len > 4096) throw FormatError("implausible record name length");
        std::string name(len, '\0');
        in.read(name.data(), len);
        if (!in) throw FormatError("truncated record name");
        ckpt.records.emplace_back(std::move(name), read_tensor(in));
    }
    return ckpt;
}

void apply_checkpoint(const Checkpoint& ckpt, nn::ParamRegistry& params) {
    std::map<std::string, const Tensor*> by_name;
    for (const auto& [name, t] : ckpt.records) by_name[name] = &t;
    for (auto& p : params) {
        auto it = by_name.find(p.name);
        if (it == by_name.end())
            throw Error("checkpoint/config mismatch: layer " + p.name + " missing from checkpoint");
        if (it->second->shape() != p.tensor->shape())
            throw Error("checkpoint/config mismatch at layer " + p.name + ": checkpoint has " +
                        shape_str(it->second->shape()) + ", model needs " +
                        shape_str(p.tensor->shape()));
        *p.tensor = it->second->detached();
    }
    if (by_name.size() != params.size())
        throw Error("checkpoint has " + std::to_string(by_name.size()) + " records, model has " +
                    std::to_string(params.size()));
}

}  // namespace promptsr::serialize
