// Copyright 2026 The Ovis Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ovis/tensor.hpp"

namespace ovis {

enum class DType { f32, f64, u8 };

std::string dtype_name(DType t);
DType parse_dtype(const std::string& name);

// Writes `values` as a raw little-endian array named `<name>.<dtype>` inside
// `dir` and returns its manifest descriptor {file, dtype, shape}.
nlohmann::json write_array(const std::filesystem::path& dir, const std::string& name,
                           std::span<const double> values, const Shape& shape, DType dtype);

struct LoadedArray {
  Shape shape;
  DType dtype = DType::f64;
  std::vector<double> values;
};

// Reads an array described by a manifest descriptor. The byte length must
// match the declared shape exactly; mismatches raise FormatError naming the
// array.
LoadedArray read_array(const std::filesystem::path& dir, const nlohmann::json& descriptor,
                       const std::string& name);

}  // namespace ovis
