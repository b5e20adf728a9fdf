#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "diffbp/errors.hpp"
#include "diffbp/tensor.hpp"

namespace diffbp {

// DFBP container: magic "DFBP", u32 version, length-prefixed UTF-8 JSON
// metadata, u32 tensor count, then per tensor: u32 name length, name,
// u8 dtype code (0 = f32), u32 ndim, u64 dims, little-endian f32 payload.
// All integers little-endian. Write -> read -> write is byte-identical.
struct DfbpFile {
    nlohmann::json meta = nlohmann::json::object();
    std::vector<std::pair<std::string, Tensor>> tensors;

    const Tensor& find(const std::string& name) const;
    bool contains(const std::string& name) const;
};

inline constexpr std::uint32_t kDfbpVersion = 1;

void save_dfbp(const DfbpFile& file, const std::string& path);
DfbpFile load_dfbp(const std::string& path);

// Single-tensor variant used for image/feature files.
void write_tensor(const Tensor& t, const std::string& path);
Tensor read_tensor(const std::string& path);

}  // namespace diffbp
