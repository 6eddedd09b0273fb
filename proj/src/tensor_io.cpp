#include "lipemo/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "lipemo/errors.hpp"

namespace lipemo {
namespace {

constexpr char kMagic[4] = {'L', 'P', 'T', 'N'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "tensor container assumes a little-endian host");

template <class T>
void put(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::ifstream& is, const std::filesystem::path& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
    throw InvalidInput("truncated tensor file " + path.string());
  return v;
}

}  // namespace

void write_tensor_file(const std::filesystem::path& path, const std::vector<std::uint64_t>& dims,
                       std::span<const float> data) {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  if (n != data.size()) throw InvalidInput("tensor dims do not match data size");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InvalidInput("cannot write " + path.string());
  os.write(kMagic, 4);
  put(os, kVersion);
  put(os, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put(os, d);
  os.write(reinterpret_cast<const char*>(data.data()),
           static_cast<std::streamsize>(data.size() * sizeof(float)));
  if (!os) throw InvalidInput("write failed for " + path.string());
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open " + path.string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw InvalidInput("bad tensor magic in " + path.string());
  if (get<std::uint32_t>(is, path) != kVersion)
    throw InvalidInput("unsupported tensor version in " + path.string());
  const auto rank = get<std::uint32_t>(is, path);
  if (rank > 8) throw InvalidInput("implausible tensor rank in " + path.string());
  TensorFile out;
  std::uint64_t n = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    out.dims.push_back(get<std::uint64_t>(is, path));
    n *= out.dims.back();
  }
  out.data.resize(n);
  if (!is.read(reinterpret_cast<char*>(out.data.data()),
               static_cast<std::streamsize>(n * sizeof(float))))
    throw InvalidInput("truncated tensor data in " + path.string());
  return out;
}

}  // namespace lipemo
