#include "ktnet/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "ktnet/common.hpp"

namespace ktnet {

namespace {

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& os, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(os, bits);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    ensure(is.good(), "checkpoint truncated while reading u32");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    ensure(is.good(), "checkpoint truncated while reading u64");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& is) {
    uint64_t bits = read_u64(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    ensure(os.good(), "cannot open checkpoint for writing: ", path.string());
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    write_u32(os, kCheckpointVersion);
    const std::string header = ckpt.header.dump();
    write_u32(os, static_cast<uint32_t>(header.size()));
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    write_u32(os, static_cast<uint32_t>(ckpt.records.size()));
    for (const auto& [name, rec] : ckpt.records) {  // std::map: ascending name order
        write_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_u32(os, static_cast<uint32_t>(rec.shape.size()));
        int64_t n = 1;
        for (int64_t d : rec.shape) {
            write_u64(os, static_cast<uint64_t>(d));
            n *= d;
        }
        ensure(static_cast<size_t>(n) == rec.values.size(), "record '", name,
               "' has ", rec.values.size(), " values but shape ", shape_str(rec.shape));
        for (double v : rec.values) write_f64(os, v);
    }
    os.flush();
    ensure(os.good(), "I/O failure while writing checkpoint: ", path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    ensure(is.good(), "cannot open checkpoint: ", path.string());
    char magic[sizeof(kCheckpointMagic) - 1];
    is.read(magic, sizeof(magic));
    ensure(is.good() && std::memcmp(magic, kCheckpointMagic, sizeof(magic)) == 0,
           "not a KT-Net checkpoint: ", path.string());
    const uint32_t version = read_u32(is);
    ensure(version == kCheckpointVersion, "unsupported checkpoint version ", version,
           " (this build reads version ", kCheckpointVersion, "): ", path.string());

    Checkpoint ckpt;
    const uint32_t header_len = read_u32(is);
    std::string header(header_len, '\0');
    is.read(header.data(), header_len);
    ensure(is.good(), "checkpoint truncated in header: ", path.string());
    ckpt.header = nlohmann::json::parse(header);

    const uint32_t count = read_u32(is);
    for (uint32_t r = 0; r < count; ++r) {
        const uint32_t name_len = read_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        ensure(is.good(), "checkpoint truncated in record name: ", path.string());
        CheckpointRecord rec;
        const uint32_t rank = read_u32(is);
        int64_t n = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            rec.shape.push_back(static_cast<int64_t>(read_u64(is)));
            n *= rec.shape.back();
        }
        rec.values.resize(static_cast<size_t>(n));
        for (auto& v : rec.values) v = read_f64(is);
        ckpt.records.emplace(std::move(name), std::move(rec));
    }
    return ckpt;
}

}  // namespace ktnet
