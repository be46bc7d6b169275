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

#include "ovis/array_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "ovis/error.hpp"

namespace ovis {

namespace fs = std::filesystem;

namespace {

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::u8: return 1;
  }
  return 1;
}

template <typename T>
T to_little_endian(T v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
    std::memcpy(&v, bytes, sizeof(T));
    return v;
  }
}

}  // namespace

std::string dtype_name(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::u8: return "u8";
  }
  return "?";
}

DType parse_dtype(const std::string& name) {
  if (name == "f32") return DType::f32;
  if (name == "f64") return DType::f64;
  if (name == "u8") return DType::u8;
  fail<FormatError>("unknown dtype '", name, "'");
}

nlohmann::json write_array(const fs::path& dir, const std::string& name,
                           std::span<const double> values, const Shape& shape, DType dtype) {
  require(shape_numel(shape) == values.size(), "write_array ", name, ": shape ",
          shape_to_string(shape), " does not match ", values.size(), " values");
  const std::string file = name + "." + dtype_name(dtype);
  std::vector<unsigned char> bytes(values.size() * dtype_size(dtype));
  for (std::size_t i = 0; i < values.size(); ++i) {
    unsigned char* dst = bytes.data() + i * dtype_size(dtype);
    switch (dtype) {
      case DType::f32: {
        const float v = to_little_endian(static_cast<float>(values[i]));
        std::memcpy(dst, &v, 4);
        break;
      }
      case DType::f64: {
        const double v = to_little_endian(values[i]);
        std::memcpy(dst, &v, 8);
        break;
      }
      case DType::u8: *dst = static_cast<unsigned char>(values[i]); break;
    }
  }
  std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
  require<IoError>(static_cast<bool>(out), "cannot open ", (dir / file).string(), " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require<IoError>(static_cast<bool>(out), "failed writing ", (dir / file).string());
  return {{"file", file}, {"dtype", dtype_name(dtype)}, {"shape", shape}};
}

LoadedArray read_array(const fs::path& dir, const nlohmann::json& descriptor,
                       const std::string& name) {
  require<FormatError>(descriptor.is_object() && descriptor.contains("file") &&
                           descriptor.contains("dtype") && descriptor.contains("shape"),
                       "array '", name, "': descriptor needs file, dtype and shape");
  LoadedArray arr;
  arr.dtype = parse_dtype(descriptor.at("dtype").get<std::string>());
  arr.shape = descriptor.at("shape").get<Shape>();
  const fs::path path = dir / descriptor.at("file").get<std::string>();
  std::ifstream in(path, std::ios::binary);
  require<IoError>(static_cast<bool>(in), "array '", name, "': cannot open ", path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::size_t n = shape_numel(arr.shape);
  const std::size_t expected = n * dtype_size(arr.dtype);
  require<FormatError>(bytes.size() == expected, "array '", name, "': shape ",
                       shape_to_string(arr.shape), " of ", dtype_name(arr.dtype), " needs ",
                       expected, " bytes but file has ", bytes.size());
  arr.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* src = bytes.data() + i * dtype_size(arr.dtype);
    switch (arr.dtype) {
      case DType::f32: {
        float v;
        std::memcpy(&v, src, 4);
        arr.values[i] = to_little_endian(v);
        break;
      }
      case DType::f64: {
        double v;
        std::memcpy(&v, src, 8);
        arr.values[i] = to_little_endian(v);
        break;
      }
      case DType::u8: arr.values[i] = *src; break;
    }
  }
  return arr;
}

}  // namespace ovis
