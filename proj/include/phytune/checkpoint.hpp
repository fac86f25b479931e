#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phytune/tensor.hpp"

namespace phytune {

// Binary container: "PHYTCKPT", u32 format version, u64 header length, a JSON
// header {version, kind, meta, tensors: [{name, shape, offset}]}, then the
// tensors as little-endian doubles.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::string kind;
    nlohmann::json meta;
    std::map<std::string, Tensor> tensors;

    const Tensor& tensor(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace phytune
