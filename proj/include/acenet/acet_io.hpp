// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "acenet/tensor.hpp"

namespace acenet {

// ACET container: "ACET", u32 version, u32 rank, rank x u32 extents, then a
// little-endian f32 payload.
inline constexpr std::array<char, 4> kAcetMagic{'A', 'C', 'E', 'T'};
inline constexpr std::uint32_t kAcetVersion = 1;

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>((v >> (8 * b)) & 0xffu));
}

inline std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw IoError("ACET: truncated header");
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(in[pos + b]) << (8 * b);
  pos += 4;
  return v;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_acet(const Tensor<float>& t) {
  std::vector<std::uint8_t> out(kAcetMagic.begin(), kAcetMagic.end());
  detail::put_u32(out, kAcetVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d = 0; d < t.rank(); ++d) detail::put_u32(out, static_cast<std::uint32_t>(t.dim(d)));
  out.reserve(out.size() + 4 * t.numel());
  for (float v : t.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline Tensor<float> decode_acet(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12 || !std::equal(kAcetMagic.begin(), kAcetMagic.end(), bytes.begin()))
    throw IoError("ACET: bad magic");
  std::size_t pos = 4;
  const auto version = detail::get_u32(bytes, pos);
  if (version != kAcetVersion) throw IoError("ACET: unsupported version " + std::to_string(version));
  const auto rank = detail::get_u32(bytes, pos);
  if (rank < 1 || rank > Shape::kMaxRank) throw IoError("ACET: unsupported rank " + std::to_string(rank));
  std::vector<std::size_t> dims;
  for (std::uint32_t d = 0; d < rank; ++d) dims.push_back(detail::get_u32(bytes, pos));
  Shape shape(dims);
  if (bytes.size() - pos != 4 * shape.numel()) throw IoError("ACET: payload length does not match " + shape.str());
  std::vector<float> data(shape.numel());
  for (auto& v : data) v = std::bit_cast<float>(detail::get_u32(bytes, pos));
  return Tensor<float>(shape, std::move(data));
}

inline void write_acet(const std::filesystem::path& path, const Tensor<float>& t) {
  const auto bytes = encode_acet(t);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

inline Tensor<float> read_acet(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  try {
    return decode_acet(bytes);
  } catch (const IoError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace acenet
