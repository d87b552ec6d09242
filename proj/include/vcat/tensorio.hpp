#pragma once

#include <map>
#include <string>
#include <vector>

namespace vcat {

/// Named float tensors with a small binary container format ("VCT1").
/// Used for encoder weights, exemplar caches, and perturbation checkpoints.
/// Layout per entry: u32 name_len, name bytes, u32 ndim, u32 dims[],
/// f32 data[] — all little-endian, entries sorted by name so identical
/// content always produces identical bytes.
struct NamedTensor {
    std::vector<int> shape;
    std::vector<float> data;

    size_t numel() const {
        size_t n = 1;
        for (int d : shape) n *= static_cast<size_t>(d);
        return n;
    }
};

using TensorMap = std::map<std::string, NamedTensor>;

void save_tensors(const std::string& path, const TensorMap& tensors);
TensorMap load_tensors(const std::string& path);

}  // namespace vcat
