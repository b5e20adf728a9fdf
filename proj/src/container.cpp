#include "diffbp/container.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace diffbp {

namespace {

using Kind = CheckpointError::Kind;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw CheckpointError(Kind::truncated, "container truncated");
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

const Tensor& DfbpFile::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw CheckpointError(Kind::malformed, "container is missing tensor '" + name + "'");
}

bool DfbpFile::contains(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

void save_dfbp(const DfbpFile& file, const std::string& path) {
    std::string out;
    out += "DFBP";
    put_u32(out, kDfbpVersion);
    const std::string json = file.meta.dump();
    put_u32(out, static_cast<std::uint32_t>(json.size()));
    out += json;
    put_u32(out, static_cast<std::uint32_t>(file.tensors.size()));
    for (const auto& [name, t] : file.tensors) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out += name;
        out.push_back(0);  // dtype code 0 = f32
        put_u32(out, static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) put_u64(out, d);
        for (std::size_t i = 0; i < t.numel(); ++i) put_f32(out, t.data()[i]);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to '" + path + "'");
}

DfbpFile load_dfbp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path + "' for reading");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{buf};
    if (buf.size() < 4) throw CheckpointError(Kind::truncated, "container truncated: '" + path + "'");
    if (r.bytes(4) != "DFBP")
        throw CheckpointError(Kind::bad_magic, "bad magic in '" + path + "' (expected DFBP)");
    const std::uint32_t version = r.u32();
    if (version != kDfbpVersion)
        throw CheckpointError(Kind::bad_version,
                              "unsupported container version " + std::to_string(version) + " in '" + path + "'");
    DfbpFile file;
    const std::uint32_t json_len = r.u32();
    const std::string json = r.bytes(json_len);
    try {
        file.meta = nlohmann::json::parse(json);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(Kind::malformed, std::string("bad metadata JSON: ") + e.what());
    }
    const std::uint32_t count = r.u32();
    file.tensors.reserve(count);
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint32_t name_len = r.u32();
        std::string name = r.bytes(name_len);
        const std::uint8_t dtype = r.u8();
        if (dtype != 0)
            throw CheckpointError(Kind::bad_dtype, "unsupported dtype code " + std::to_string(dtype) +
                                                       " for tensor '" + name + "'");
        const std::uint32_t ndim = r.u32();
        std::vector<std::size_t> shape(ndim);
        std::size_t numel = 1;
        for (std::uint32_t i = 0; i < ndim; ++i) {
            shape[i] = static_cast<std::size_t>(r.u64());
            if (shape[i] == 0) throw CheckpointError(Kind::malformed, "zero dimension for tensor '" + name + "'");
            numel *= shape[i];
        }
        if (ndim == 0) throw CheckpointError(Kind::malformed, "rank-0 tensor '" + name + "'");
        r.need(numel * 4);
        std::vector<float> data(numel);
        for (std::size_t i = 0; i < numel; ++i) data[i] = r.f32();
        file.tensors.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    if (r.pos != buf.size()) throw CheckpointError(Kind::malformed, "trailing bytes in '" + path + "'");
    return file;
}

void write_tensor(const Tensor& t, const std::string& path) {
    DfbpFile file;
    file.meta = nlohmann::json{{"kind", "tensor"}};
    file.tensors.emplace_back("tensor", t);
    save_dfbp(file, path);
}

Tensor read_tensor(const std::string& path) {
    DfbpFile file = load_dfbp(path);
    if (file.tensors.size() != 1)
        throw CheckpointError(Kind::malformed, "expected a single tensor in '" + path + "'");
    return file.tensors[0].second;
}

}  // namespace diffbp
