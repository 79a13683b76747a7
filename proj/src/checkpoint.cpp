#include "vsd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace vsd {

namespace {

constexpr char kMagic[8] = {'V', 'S', 'D', 'A', 'R', 'C', 'H', '1'};
constexpr std::uint64_t kMaxNameLen = 1u << 16;
constexpr std::uint64_t kMaxDim = 1u << 28;

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::ifstream& in, const std::filesystem::path& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError("truncated archive " + path.string());
  return v;
}

}  // namespace

void save_arrays(const std::filesystem::path& path, const ArrayMap& arrays,
                 std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  put(out, config_hash);
  put(out, static_cast<std::uint64_t>(arrays.size()));
  std::vector<double> buf;
  for (const auto& [name, mat] : arrays) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(out, static_cast<std::uint64_t>(mat.rows()));
    put(out, static_cast<std::uint64_t>(mat.cols()));
    buf.resize(static_cast<std::size_t>(mat.size()));
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < mat.rows(); ++r)
      for (Eigen::Index c = 0; c < mat.cols(); ++c) buf[k++] = mat(r, c);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(double)));
  }
  out.flush();
  if (!out) throw IoError("failed writing " + path.string());
}

ArrayMap load_arrays(const std::filesystem::path& path, std::uint64_t* config_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError(path.string() + " is not a version-1 array archive");
  const auto hash = take<std::uint64_t>(in, path);
  if (config_hash) *config_hash = hash;
  const auto count = take<std::uint64_t>(in, path);

  ArrayMap arrays;
  std::vector<double> buf;
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = take<std::uint32_t>(in, path);
    if (name_len == 0 || name_len > kMaxNameLen)
      throw CheckpointError("implausible name length in " + path.string());
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = take<std::uint64_t>(in, path);
    const auto cols = take<std::uint64_t>(in, path);
    if (!in || rows > kMaxDim || cols > kMaxDim)
      throw CheckpointError("implausible shape for " + name + " in " + path.string());
    buf.resize(static_cast<std::size_t>(rows * cols));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(double)));
    if (!in) throw CheckpointError("truncated archive " + path.string());
    MatX<double> mat(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < mat.rows(); ++r)
      for (Eigen::Index c = 0; c < mat.cols(); ++c) mat(r, c) = buf[k++];
    if (!arrays.emplace(std::move(name), std::move(mat)).second)
      throw CheckpointError("duplicate array name in " + path.string());
  }
  return arrays;
}

}  // namespace vsd
