#include "vcat/tensorio.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace vcat {

namespace {

constexpr char kMagic[4] = {'V', 'C', 'T', '1'};

void put_u32(std::ostream& out, uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b, 4);
}

uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw std::runtime_error("tensorio: truncated file");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_tensors(const std::string& path, const TensorMap& tensors) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("tensorio: cannot open for write: " + path);
    out.write(kMagic, 4);
    put_u32(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (t.numel() != t.data.size())
            throw std::invalid_argument("tensorio: shape/data mismatch for " + name);
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<uint32_t>(t.shape.size()));
        for (int d : t.shape) put_u32(out, static_cast<uint32_t>(d));
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("tensorio: write failed: " + path);
}

TensorMap load_tensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("tensorio: cannot open: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("tensorio: bad magic in " + path);
    uint32_t count = get_u32(in);
    TensorMap tensors;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = get_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        uint32_t ndim = get_u32(in);
        NamedTensor t;
        t.shape.resize(ndim);
        size_t numel = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            t.shape[d] = static_cast<int>(get_u32(in));
            numel *= static_cast<size_t>(t.shape[d]);
        }
        t.data.resize(numel);
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(numel * sizeof(float)));
        if (!in) throw std::runtime_error("tensorio: truncated tensor " + name + " in " + path);
        tensors.emplace(std::move(name), std::move(t));
    }
    return tensors;
}

}  // namespace vcat
