/*
 * Copyright 2026 The vgsum Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "vgsum/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>

namespace vgsum {
namespace io {
namespace {

template <typename U>
void put_le(std::ostream& out, U v) {
  std::array<char, sizeof(U)> bytes;
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes;
  if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) throw InputError("unexpected end of binary stream");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void put_u32(std::ostream& out, std::uint32_t v) { put_le(out, v); }
void put_u64(std::ostream& out, std::uint64_t v) { put_le(out, v); }
void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
void put_f32(std::ostream& out, float v) { put_le(out, std::bit_cast<std::uint32_t>(v)); }
std::uint32_t get_u32(std::istream& in) { return get_le<std::uint32_t>(in); }
std::uint64_t get_u64(std::istream& in) { return get_le<std::uint64_t>(in); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_le<std::uint64_t>(in)); }
float get_f32(std::istream& in) { return std::bit_cast<float>(get_le<std::uint32_t>(in)); }

}  // namespace io

namespace {
constexpr char kMagic[4] = {'V', 'G', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kMaxRank = 16;
}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  io::put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (Index e : t.shape()) io::put_u64(out, static_cast<std::uint64_t>(e));
  const double* data = t.value().data();
  for (Index i = 0; i < t.numel(); ++i) io::put_f64(out, data[i]);
}

Tensor read_tensor(std::istream& in) {
  const std::uint32_t rank = io::get_u32(in);
  if (rank == 0 || rank > kMaxRank) throw InputError("tensor record has invalid rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = static_cast<Index>(io::get_u64(in));
  for (Index e : shape)
    if (e <= 0) throw InputError("tensor record has invalid extent in " + shape_string(shape));
  std::vector<double> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : values) v = io::get_f64(in);
  return Tensor::from_values(shape, values);
}

void save_tensors(const std::filesystem::path& path, const TensorMap& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  io::put_u32(out, kVersion);
  io::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    io::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(out, t);
  }
  if (!out) throw InputError("write failed for " + path.string());
}

TensorMap load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || !std::equal(magic, magic + 4, kMagic))
    throw InputError(path.string() + " is not a tensor container");
  const std::uint32_t version = io::get_u32(in);
  if (version != kVersion) throw InputError("unsupported tensor container version " + std::to_string(version));
  const std::uint32_t count = io::get_u32(in);
  TensorMap tensors;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = io::get_u32(in);
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw InputError("truncated tensor name in " + path.string());
    tensors.emplace(std::move(name), read_tensor(in));
  }
  return tensors;
}

}  // namespace vgsum
