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

#pragma once

// Binary tensor storage: little-endian, 64-bit floats.
//
//   tensor    := rank:u32 extent:u64[rank] value:f64[numel]
//   container := "VGTC" version:u32 count:u32 { name_len:u32 name:bytes tensor }[count]

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "vgsum/tensor.hpp"

namespace vgsum {

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

using TensorMap = std::map<std::string, Tensor>;

void save_tensors(const std::filesystem::path& path, const TensorMap& tensors);
TensorMap load_tensors(const std::filesystem::path& path);

namespace io {

void put_u32(std::ostream& out, std::uint32_t v);
void put_u64(std::ostream& out, std::uint64_t v);
void put_f64(std::ostream& out, double v);
void put_f32(std::ostream& out, float v);
std::uint32_t get_u32(std::istream& in);
std::uint64_t get_u64(std::istream& in);
double get_f64(std::istream& in);
float get_f32(std::istream& in);

}  // namespace io

}  // namespace vgsum
