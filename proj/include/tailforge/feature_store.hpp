#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "tailforge/error.hpp"
#include "tailforge/matrix.hpp"

namespace tailforge {

// Feature matrix file:
//   bytes 0-3   magic "TFFM"
//   bytes 4-7   uint32 version (1)
//   bytes 8-15  uint64 rows
//   bytes 16-23 uint64 cols
//   then rows*cols IEEE-754 binary32 values, row-major.
// All integers and floats are little-endian.
inline constexpr std::array<char, 4> kFeatureMagic{'T', 'F', 'F', 'M'};
inline constexpr std::uint32_t kFeatureVersion = 1;

namespace detail {

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<unsigned char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i)
    bytes[i] = static_cast<unsigned char>((value >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

template <typename U>
U get_le(std::istream& in, const std::string& what) {
  std::array<unsigned char, sizeof(U)> bytes{};
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size()))
    throw ValidationError(what + ": truncated file");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

inline void put_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }

inline float get_f32(std::istream& in, const std::string& what) {
  return std::bit_cast<float>(get_le<std::uint32_t>(in, what));
}

}  // namespace detail

template <typename T>
void write_features(std::ostream& out, const Matrix<T>& features) {
  out.write(kFeatureMagic.data(), kFeatureMagic.size());
  detail::put_le<std::uint32_t>(out, kFeatureVersion);
  detail::put_le<std::uint64_t>(out, features.rows());
  detail::put_le<std::uint64_t>(out, features.cols());
  for (T v : features.data()) detail::put_f32(out, static_cast<float>(v));
}

inline Matrix<double> read_features(std::istream& in, const std::string& what = "features") {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kFeatureMagic)
    throw ValidationError(what + ": bad magic (not a feature file)");
  const auto version = detail::get_le<std::uint32_t>(in, what);
  if (version != kFeatureVersion)
    throw ValidationError(what + ": unsupported version " + std::to_string(version));
  const auto rows = detail::get_le<std::uint64_t>(in, what);
  const auto cols = detail::get_le<std::uint64_t>(in, what);
  if (cols != 0 && rows > (std::uint64_t{1} << 34) / cols)
    throw ValidationError(what + ": implausible shape " + std::to_string(rows) + "x" +
                          std::to_string(cols));
  std::vector<double> data;
  data.reserve(rows * cols);
  for (std::uint64_t i = 0; i < rows * cols; ++i) data.push_back(detail::get_f32(in, what));
  return Matrix<double>(rows, cols, std::move(data));
}

template <typename T>
void save_features(const std::filesystem::path& path, const Matrix<T>& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_features(out, features);
}

inline Matrix<double> load_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open feature file " + path.string());
  return read_features(in, path.string());
}

// Loads each referenced feature file once.
class FeatureCache {
 public:
  explicit FeatureCache(std::filesystem::path base_dir) : base_(std::move(base_dir)) {}

  const Matrix<double>& get(const std::string& file) {
    auto it = cache_.find(file);
    if (it == cache_.end()) it = cache_.emplace(file, load_features(base_ / file)).first;
    return it->second;
  }

 private:
  std::filesystem::path base_;
  std::map<std::string, Matrix<double>> cache_;
};

}  // namespace tailforge
