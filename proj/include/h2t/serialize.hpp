#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "h2t/tensor.hpp"

namespace h2t {

inline constexpr uint64_t kFnvOffset = 14695981039346656037ULL;
inline constexpr uint64_t kFnvPrime = 1099511628211ULL;

inline uint64_t fnv1a(const void* bytes, size_t len, uint64_t h = kFnvOffset) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
    return h;
}

uint64_t fnv1a_file(const std::string& path);
std::string hash_hex(uint64_t h);

/// Binary container holding named float32 tensors.
///
/// Layout (all integers little-endian):
///   magic            8 bytes ("H2TCKPT1" for checkpoints, "H2TTENS1" for data)
///   count            u64
///   per entry:       u64 name length, UTF-8 name bytes,
///                    u64 rank, u64 extents[rank], f32 data[numel]
///   checksum         u64 FNV-1a over every preceding byte
struct NamedTensors {
    std::vector<std::pair<std::string, Tensor>> entries;

    void add(const std::string& name, Tensor t) { entries.emplace_back(name, std::move(t)); }
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const;
};

void write_container(const std::string& path, const std::string& magic, const NamedTensors& tensors);
NamedTensors read_container(const std::string& path, const std::string& magic);

inline constexpr const char* kCheckpointMagic = "H2TCKPT1";
inline constexpr const char* kTensorMagic = "H2TTENS1";

} // namespace h2t
