#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "tailforge/feature_store.hpp"
#include "tailforge/trainer.hpp"

namespace tailforge {

// Model checkpoint, little-endian throughout:
//   "TFCK"                         magic
//   u32  version (1)
//   u64  input_dim
//   u32  num_classes, then num_classes x i32 class ids (output column order)
//   u32  num_encoder_layers
//   tensors: for each encoder layer weight then bias, then classifier weight
//            then bias:  u64 rows, u64 cols, rows*cols f32 row-major
//   u64  config length, then that many bytes of config text (echo)
inline constexpr std::array<char, 4> kCheckpointMagic{'T', 'F', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  std::string config_echo;
};

namespace detail {

inline void put_tensor(std::ostream& out, const Matrix<double>& m) {
  put_le<std::uint64_t>(out, m.rows());
  put_le<std::uint64_t>(out, m.cols());
  for (double v : m.data()) put_f32(out, static_cast<float>(v));
}

inline Matrix<double> get_tensor(std::istream& in, const std::string& what) {
  const auto rows = get_le<std::uint64_t>(in, what);
  const auto cols = get_le<std::uint64_t>(in, what);
  if (rows * cols > (1ULL << 32)) throw ValidationError(what + ": implausible tensor shape");
  std::vector<double> data;
  data.reserve(rows * cols);
  for (std::uint64_t i = 0; i < rows * cols; ++i) data.push_back(get_f32(in, what));
  return Matrix<double>(rows, cols, std::move(data));
}

}  // namespace detail

inline void write_checkpoint(std::ostream& out, const Model& model, const std::string& config_echo) {
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint64_t>(out, model.input_dim);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.class_ids.size()));
  for (int id : model.class_ids) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(id));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(model.encoder.size()));
  for (const auto& layer : model.encoder) {
    detail::put_tensor(out, layer.weight->value());
    detail::put_tensor(out, layer.bias->value());
  }
  detail::put_tensor(out, model.classifier.weight->value());
  detail::put_tensor(out, model.classifier.bias->value());
  detail::put_le<std::uint64_t>(out, config_echo.size());
  out.write(config_echo.data(), static_cast<std::streamsize>(config_echo.size()));
}

inline Checkpoint read_checkpoint(std::istream& in, const std::string& what = "checkpoint") {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic)
    throw ValidationError(what + ": bad magic (not a checkpoint)");
  const auto version = detail::get_le<std::uint32_t>(in, what);
  if (version != kCheckpointVersion)
    throw ValidationError(what + ": unsupported version " + std::to_string(version));
  Checkpoint ck;
  ck.model.input_dim = detail::get_le<std::uint64_t>(in, what);
  const auto classes = detail::get_le<std::uint32_t>(in, what);
  for (std::uint32_t i = 0; i < classes; ++i)
    ck.model.class_ids.push_back(static_cast<int>(detail::get_le<std::uint32_t>(in, what)));
  const auto layers = detail::get_le<std::uint32_t>(in, what);
  std::size_t expected_in = ck.model.input_dim;
  auto read_linear = [&](std::size_t out_hint) {
    Linear<double> l{parameter(detail::get_tensor(in, what)), parameter(detail::get_tensor(in, what))};
    if (l.weight->value().rows() != expected_in || l.bias->value().rows() != 1 ||
        l.bias->value().cols() != l.weight->value().cols() ||
        (out_hint != 0 && l.weight->value().cols() != out_hint)) {
      throw ValidationError(what + ": layer shapes do not chain");
    }
    expected_in = l.weight->value().cols();
    return l;
  };
  for (std::uint32_t i = 0; i < layers; ++i) ck.model.encoder.push_back(read_linear(0));
  ck.model.classifier = read_linear(classes);
  const auto len = detail::get_le<std::uint64_t>(in, what);
  ck.config_echo.resize(len);
  if (!in.read(ck.config_echo.data(), static_cast<std::streamsize>(len)))
    throw ValidationError(what + ": truncated config echo");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Model& model,
                            const std::string& config_echo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_checkpoint(out, model, config_echo);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace tailforge
