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

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "ovis/array_io.hpp"
#include "ovis/error.hpp"
#include "ovis/scene.hpp"

namespace ovis {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;
// Rows stored at reduced precision are re-normalized on load when they are
// within this distance of unit length.
constexpr double kRenormalizeTolerance = 1e-3;

double row_norm(std::span<const double> row) {
  double ss = 0.0;
  for (double v : row) ss += v * v;
  return std::sqrt(ss);
}

bool is_unit_or_zero(std::span<const double> row) {
  const double n = row_norm(row);
  return n == 0.0 || std::abs(n - 1.0) <= kUnitNormTolerance;
}

void check_embedding_rows(const Matrix& m, const std::string& what) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    require<DataError>(is_unit_or_zero(m.row(r)), what, " row ", r,
                       " is neither unit-norm nor zero (norm ", row_norm(m.row(r)), ")");
  }
}

void renormalize_rows(std::span<double> values, std::size_t cols, const std::string& what) {
  if (cols == 0) return;
  for (std::size_t r = 0; r * cols < values.size(); ++r) {
    std::span<double> row = values.subspan(r * cols, cols);
    const double n = row_norm(row);
    if (n == 0.0 || std::abs(n - 1.0) <= kUnitNormTolerance) continue;
    require<DataError>(std::abs(n - 1.0) <= kRenormalizeTolerance, what, " row ", r,
                       " has norm ", n, "; embeddings must be unit-norm or zero");
    for (double& v : row) v /= n;
  }
}

Matrix to_matrix(LoadedArray arr, const std::string& name, std::size_t rows, std::size_t cols) {
  require<FormatError>(arr.shape == Shape{rows, cols}, "array '", name, "': expected shape ",
                       shape_to_string({rows, cols}), ", manifest declares ",
                       shape_to_string(arr.shape));
  return Matrix(rows, cols, std::move(arr.values));
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows; ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return rows;
}

Matrix matrix_from_json(const json& j, std::size_t rows, std::size_t cols, const std::string& what) {
  require<FormatError>(j.is_array() && j.size() == rows, what, " must be a ", rows, "x", cols,
                       " nested array");
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = j.at(r).get<std::vector<double>>();
    require<FormatError>(row.size() == cols, what, " row ", r, " has ", row.size(),
                         " entries, expected ", cols);
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = row[c];
  }
  return m;
}

}  // namespace

std::vector<std::size_t> mask_indices(const BinaryMask& mask) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) idx.push_back(i);
  return idx;
}

void CameraFrame::validate() const {
  require<DataError>(intrinsics.rows == 3 && intrinsics.cols == 3, "intrinsics must be 3x3");
  require<DataError>(world_to_camera.rows == 4 && world_to_camera.cols == 4,
                     "world_to_camera must be 4x4");
  require<DataError>(intrinsics(1, 0) == 0.0 && intrinsics(2, 0) == 0.0 && intrinsics(2, 1) == 0.0,
                     "intrinsics must be upper-triangular");
  require<DataError>(intrinsics(0, 0) > 0.0 && intrinsics(1, 1) > 0.0,
                     "intrinsics focal lengths must be positive");
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < 3; ++k) dot += world_to_camera(i, k) * world_to_camera(j, k);
      require<DataError>(std::abs(dot - (i == j ? 1.0 : 0.0)) <= 1e-9,
                         "world_to_camera rotation block is not orthonormal");
    }
  }
  require<DataError>(world_to_camera(3, 0) == 0.0 && world_to_camera(3, 1) == 0.0 &&
                         world_to_camera(3, 2) == 0.0 && world_to_camera(3, 3) == 1.0,
                     "world_to_camera last row must be [0 0 0 1]");
  require<DataError>(depth.size() == height * width, "depth has ", depth.size(),
                     " pixels, expected ", height * width);
  require<DataError>(features.rows == height * width, "feature image has ", features.rows,
                     " pixels, expected ", height * width);
  check_embedding_rows(features, "feature image");
}

std::size_t SceneBundle::embed_dim() const {
  if (!lifted_features.empty()) return lifted_features.cols;
  for (const auto& r : mask_records) {
    if (!r.caption_embedding.empty()) return r.caption_embedding.size();
    if (!r.entity_embeddings.empty()) return r.entity_embeddings.cols;
  }
  for (const auto& f : frames)
    if (!f.features.empty()) return f.features.cols;
  return 0;
}

void SceneBundle::validate() const {
  const std::size_t m = points.rows;
  require<DataError>(m >= 1, "scene has no points");
  require<DataError>(points.cols == 3, "points must be Mx3");
  require<DataError>(colors.rows == m && colors.cols == 3, "colors must be ", m, "x3");
  for (double c : colors.data)
    require<DataError>(c >= 0.0 && c <= 1.0, "color value ", c, " outside [0, 1]");
  for (double p : points.data) require<DataError>(std::isfinite(p), "non-finite point coordinate");

  require<DataError>(mask_records.size() == gt_masks.size(), gt_masks.size(), " masks but ",
                     mask_records.size(), " mask records");
  std::vector<std::uint8_t> owner(m, 0);
  for (std::size_t j = 0; j < gt_masks.size(); ++j) {
    const auto& mask = gt_masks[j];
    require<DataError>(mask.size() == m, "mask ", j, " has length ", mask.size(), ", expected ", m);
    std::size_t count = 0;
    for (std::size_t i = 0; i < m; ++i) {
      require<DataError>(mask[i] <= 1, "mask ", j, " is not binary");
      if (!mask[i]) continue;
      require<DataError>(!owner[i], "masks overlap at point ", i);
      owner[i] = 1;
      ++count;
    }
    require<DataError>(count > 0, "mask ", j, " is empty");
  }

  const std::size_t c = embed_dim();
  if (!lifted_features.empty()) {
    require<DataError>(lifted_features.rows == m, "lifted features have ", lifted_features.rows,
                       " rows, expected ", m);
    check_embedding_rows(lifted_features, "lifted features");
  } else {
    require<DataError>(!frames.empty(), "scene has neither lifted features nor frames");
  }
  for (const auto& f : frames) {
    f.validate();
    require<DataError>(f.features.cols == c, "frame feature width ", f.features.cols,
                       " differs from embedding width ", c);
  }
  for (std::size_t j = 0; j < mask_records.size(); ++j) {
    const auto& r = mask_records[j];
    if (!r.caption_embedding.empty()) {
      require<DataError>(r.caption_embedding.size() == c, "caption embedding ", j, " has width ",
                         r.caption_embedding.size(), ", expected ", c);
      require<DataError>(is_unit_or_zero(r.caption_embedding), "caption embedding ", j,
                         " is not unit-norm");
    }
    if (!r.entity_embeddings.empty()) {
      require<DataError>(r.entity_embeddings.rows == r.entities.size(), "mask ", j, " has ",
                         r.entities.size(), " entities but ", r.entity_embeddings.rows,
                         " entity embeddings");
      require<DataError>(r.entity_embeddings.cols == c, "entity embeddings of mask ", j,
                         " have width ", r.entity_embeddings.cols, ", expected ", c);
      check_embedding_rows(r.entity_embeddings, "entity embedding");
    }
    require<DataError>(r.category >= -1 &&
                           r.category < static_cast<int>(category_names.size()),
                       "mask ", j, " has category ", r.category, " outside the category list");
  }
}

void save_bundle(const SceneBundle& bundle, const fs::path& dir) {
  bundle.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  require<IoError>(!ec, "cannot create ", dir.string(), ": ", ec.message());

  const std::size_t m = bundle.num_points();
  const std::size_t n = bundle.num_masks();
  const std::size_t c = bundle.embed_dim();
  json manifest;
  manifest["format"] = "ovis-bundle";
  manifest["version"] = kFormatVersion;
  manifest["id"] = bundle.id;
  manifest["num_points"] = m;
  manifest["num_masks"] = n;
  manifest["embed_dim"] = c;
  manifest["category_names"] = bundle.category_names;

  json arrays;
  arrays["points"] = write_array(dir, "points", bundle.points.data, {m, 3}, DType::f64);
  arrays["colors"] = write_array(dir, "colors", bundle.colors.data, {m, 3}, DType::f64);
  std::vector<double> masks;
  masks.reserve(n * m);
  for (const auto& mask : bundle.gt_masks)
    for (auto v : mask) masks.push_back(v);
  arrays["gt_masks"] = write_array(dir, "gt_masks", masks, {n, m}, DType::u8);
  if (!bundle.lifted_features.empty()) {
    arrays["lifted_features"] = write_array(dir, "lifted_features", bundle.lifted_features.data,
                                            {m, c}, DType::f64);
  }

  std::vector<double> captions(n * c, 0.0);
  std::vector<double> entities;
  json records = json::array();
  for (std::size_t j = 0; j < n; ++j) {
    const auto& r = bundle.mask_records[j];
    json rec;
    rec["caption"] = r.caption;
    rec["entities"] = r.entities;
    rec["category"] = r.category;
    rec["has_caption_embedding"] = !r.caption_embedding.empty();
    if (!r.caption_embedding.empty())
      std::copy(r.caption_embedding.begin(), r.caption_embedding.end(), captions.begin() + j * c);
    rec["entity_embedding_rows"] = r.entity_embeddings.rows;
    entities.insert(entities.end(), r.entity_embeddings.data.begin(), r.entity_embeddings.data.end());
    records.push_back(rec);
  }
  manifest["masks"] = records;
  if (c > 0) {
    arrays["caption_embeddings"] = write_array(dir, "caption_embeddings", captions, {n, c}, DType::f64);
    arrays["entity_embeddings"] =
        write_array(dir, "entity_embeddings", entities, {entities.size() / c, c}, DType::f64);
  }

  json frames = json::array();
  for (std::size_t k = 0; k < bundle.frames.size(); ++k) {
    const auto& f = bundle.frames[k];
    const std::string prefix = "frame" + std::to_string(k);
    json fj;
    fj["intrinsics"] = matrix_to_json(f.intrinsics);
    fj["world_to_camera"] = matrix_to_json(f.world_to_camera);
    fj["height"] = f.height;
    fj["width"] = f.width;
    fj["depth"] = write_array(dir, prefix + "_depth", f.depth, {f.height, f.width}, DType::f64);
    fj["features"] = write_array(dir, prefix + "_features", f.features.data,
                                 {f.height, f.width, f.features.cols}, DType::f64);
    frames.push_back(fj);
  }
  manifest["frames"] = frames;
  manifest["arrays"] = arrays;

  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  require<IoError>(static_cast<bool>(out), "cannot write manifest in ", dir.string());
  out << manifest.dump(2) << '\n';
}

SceneBundle load_bundle(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  require<IoError>(static_cast<bool>(in), "no manifest.json in ", dir.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    fail<FormatError>("manifest.json in ", dir.string(), " is not valid JSON: ", e.what());
  }

  try {
    require<FormatError>(manifest.value("format", "") == "ovis-bundle",
                         "manifest format must be 'ovis-bundle'");
    SceneBundle b;
    b.id = manifest.value("id", dir.filename().string());
    const auto m = manifest.at("num_points").get<std::size_t>();
    const auto n = manifest.at("num_masks").get<std::size_t>();
    const auto c = manifest.value("embed_dim", std::size_t{0});
    b.category_names = manifest.value("category_names", std::vector<std::string>{});
    const json& arrays = manifest.at("arrays");

    b.points = to_matrix(read_array(dir, arrays.at("points"), "points"), "points", m, 3);
    b.colors = to_matrix(read_array(dir, arrays.at("colors"), "colors"), "colors", m, 3);
    auto masks = read_array(dir, arrays.at("gt_masks"), "gt_masks");
    require<FormatError>(masks.shape == Shape{n, m}, "array 'gt_masks': expected shape ",
                         shape_to_string({n, m}), ", manifest declares ", shape_to_string(masks.shape));
    b.gt_masks.assign(n, BinaryMask(m, 0));
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < m; ++i)
        b.gt_masks[j][i] = static_cast<std::uint8_t>(masks.values[j * m + i]);

    if (arrays.contains("lifted_features")) {
      auto arr = read_array(dir, arrays.at("lifted_features"), "lifted_features");
      renormalize_rows(arr.values, c, "lifted features");
      b.lifted_features = to_matrix(std::move(arr), "lifted_features", m, c);
    }

    const json& records = manifest.at("masks");
    require<FormatError>(records.is_array() && records.size() == n, "manifest lists ",
                         records.size(), " mask records for ", n, " masks");
    std::vector<double> captions;
    std::vector<double> entities;
    if (arrays.contains("caption_embeddings")) {
      auto arr = read_array(dir, arrays.at("caption_embeddings"), "caption_embeddings");
      require<FormatError>(arr.shape == Shape{n, c}, "array 'caption_embeddings': expected shape ",
                           shape_to_string({n, c}), ", manifest declares ", shape_to_string(arr.shape));
      renormalize_rows(arr.values, c, "caption embeddings");
      captions = std::move(arr.values);
    }
    if (arrays.contains("entity_embeddings")) {
      auto arr = read_array(dir, arrays.at("entity_embeddings"), "entity_embeddings");
      require<FormatError>(arr.shape.size() == 2 && arr.shape[1] == c,
                           "array 'entity_embeddings' must have ", c, " columns");
      renormalize_rows(arr.values, c, "entity embeddings");
      entities = std::move(arr.values);
    }
    std::size_t entity_row = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const json& rj = records.at(j);
      MaskRecord r;
      r.caption = rj.value("caption", "");
      r.entities = rj.value("entities", std::vector<std::string>{});
      r.category = rj.value("category", -1);
      if (rj.value("has_caption_embedding", false)) {
        require<FormatError>(!captions.empty(), "mask ", j,
                             " declares a caption embedding but none is stored");
        r.caption_embedding.assign(captions.begin() + static_cast<std::ptrdiff_t>(j * c),
                                   captions.begin() + static_cast<std::ptrdiff_t>((j + 1) * c));
      }
      const auto rows = rj.value("entity_embedding_rows", std::size_t{0});
      if (rows > 0) {
        require<FormatError>((entity_row + rows) * c <= entities.size(),
                             "array 'entity_embeddings' is shorter than the mask records declare");
        r.entity_embeddings = Matrix(
            rows, c,
            std::vector<double>(entities.begin() + static_cast<std::ptrdiff_t>(entity_row * c),
                                entities.begin() + static_cast<std::ptrdiff_t>((entity_row + rows) * c)));
        entity_row += rows;
      }
      b.mask_records.push_back(std::move(r));
    }
    require<FormatError>(entity_row * std::max<std::size_t>(c, 1) == entities.size() || c == 0,
                         "array 'entity_embeddings' has rows not claimed by any mask record");

    for (std::size_t k = 0; k < manifest.value("frames", json::array()).size(); ++k) {
      const json& fj = manifest.at("frames").at(k);
      const std::string prefix = "frame" + std::to_string(k);
      CameraFrame f;
      f.height = fj.at("height").get<std::size_t>();
      f.width = fj.at("width").get<std::size_t>();
      f.intrinsics = matrix_from_json(fj.at("intrinsics"), 3, 3, prefix + " intrinsics");
      f.world_to_camera = matrix_from_json(fj.at("world_to_camera"), 4, 4, prefix + " world_to_camera");
      auto depth = read_array(dir, fj.at("depth"), prefix + "_depth");
      require<FormatError>(depth.shape == Shape{f.height, f.width}, "array '", prefix,
                           "_depth': expected shape ", shape_to_string({f.height, f.width}));
      f.depth = std::move(depth.values);
      auto feats = read_array(dir, fj.at("features"), prefix + "_features");
      require<FormatError>(feats.shape == Shape{f.height, f.width, c}, "array '", prefix,
                           "_features': expected shape ", shape_to_string({f.height, f.width, c}));
      renormalize_rows(feats.values, c, prefix + " features");
      f.features = Matrix(f.height * f.width, c, std::move(feats.values));
      b.frames.push_back(std::move(f));
    }

    b.validate();
    return b;
  } catch (const json::exception& e) {
    fail<FormatError>("manifest.json in ", dir.string(), ": ", e.what());
  }
}

}  // namespace ovis
