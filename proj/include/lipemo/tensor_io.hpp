#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lipemo {

// Raw tensor container: magic "LPTN", uint32 version, uint32 rank, uint64 dims,
// then little-endian float32 data in row-major order.
struct TensorFile {
  std::vector<std::uint64_t> dims;
  std::vector<float> data;
};

void write_tensor_file(const std::filesystem::path& path, const std::vector<std::uint64_t>& dims,
                       std::span<const float> data);
TensorFile read_tensor_file(const std::filesystem::path& path);

}  // namespace lipemo
