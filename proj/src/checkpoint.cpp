#include "mocap/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace mocap::num {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian");

namespace {

constexpr char kMagic[4] = {'D', 'M', 'A', 'E'};
constexpr uint32_t kVersion = 1;

void put_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t get_u32(std::istream& is, const std::string& path) {
    uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4))
        throw DataError("checkpoint: truncated file " + path);
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& header,
                     const NamedParams& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("checkpoint: cannot open " + path + " for writing");
    os.write(kMagic, 4);
    put_u32(os, kVersion);
    put_u32(os, static_cast<uint32_t>(header.size()));
    os.write(header.data(), static_cast<std::streamsize>(header.size()));
    put_u32(os, static_cast<uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        put_u32(os, static_cast<uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(os, static_cast<uint32_t>(t.shape().size()));
        for (int e : t.shape()) put_u32(os, static_cast<uint32_t>(e));
        os.write(reinterpret_cast<const char*>(t.values().data()),
                 static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!os) throw DataError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("checkpoint: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("checkpoint: bad magic in " + path);
    const uint32_t version = get_u32(is, path);
    if (version != kVersion)
        throw DataError("checkpoint: unsupported version " + std::to_string(version) + " in " +
                        path);
    Checkpoint ck;
    const uint32_t header_len = get_u32(is, path);
    ck.header.resize(header_len);
    if (!is.read(ck.header.data(), header_len)) throw DataError("checkpoint: truncated " + path);
    const uint32_t count = get_u32(is, path);
    for (uint32_t i = 0; i < count; i++) {
        const uint32_t name_len = get_u32(is, path);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw DataError("checkpoint: truncated " + path);
        const uint32_t rank = get_u32(is, path);
        std::vector<int> shape(rank);
        int64_t numel = 1;
        for (uint32_t d = 0; d < rank; d++) {
            shape[d] = static_cast<int>(get_u32(is, path));
            numel *= shape[d];
        }
        std::vector<double> values(numel);
        if (!is.read(reinterpret_cast<char*>(values.data()),
                     static_cast<std::streamsize>(numel * sizeof(double))))
            throw DataError("checkpoint: truncated payload for '" + name + "' in " + path);
        ck.params.emplace_back(std::move(name), Tensor::constant(std::move(shape), std::move(values)));
    }
    return ck;
}

}  // namespace mocap::num
