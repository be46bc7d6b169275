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

#include <fstream>

#include "json.hpp"
#include "ovis/array_io.hpp"
#include "ovis/error.hpp"
#include "ovis/model.hpp"

namespace ovis {

using nlohmann::json;

namespace {
constexpr int kCheckpointVersion = 1;
}

void save_model(const SegModel& model, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  require<IoError>(!ec, "cannot create checkpoint directory ", dir.string(), ": ", ec.message());
  json manifest;
  manifest["format"] = "ovis-model";
  manifest["version"] = kCheckpointVersion;
  manifest["config"] = json::parse(model.config().to_json());
  json params = json::object();
  for (const auto& [name, t] : model.named_parameters())
    params[name] = write_array(dir, name, t.data(), t.shape(), DType::f64);
  manifest["parameters"] = params;
  std::ofstream out(dir / "manifest.json");
  require<IoError>(static_cast<bool>(out), "cannot write ", (dir / "manifest.json").string());
  out << manifest.dump(2) << '\n';
  require<IoError>(static_cast<bool>(out), "failed writing ", (dir / "manifest.json").string());
}

SegModel load_model(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  std::ifstream in(path);
  require<IoError>(static_cast<bool>(in), "cannot open checkpoint manifest ", path.string());
  json manifest;
  try {
    manifest = json::parse(in);
  } catch (const json::exception& e) {
    fail<FormatError>("checkpoint manifest ", path.string(), ": ", e.what());
  }
  require<FormatError>(manifest.value("format", "") == "ovis-model", path.string(),
                       " is not a model checkpoint");
  require<FormatError>(manifest.value("version", 0) == kCheckpointVersion,
                       "unsupported checkpoint version in ", path.string());
  require<FormatError>(manifest.contains("config") && manifest.contains("parameters"),
                       "checkpoint manifest lacks config or parameters");
  SegModel model(SegModelConfig::from_json(manifest["config"].dump()));
  const auto& params = manifest["parameters"];
  require<FormatError>(params.size() == model.named_parameters().size(), "checkpoint has ",
                       params.size(), " parameters, config implies ", model.named_parameters().size());
  for (const auto& [name, tensor] : model.named_parameters()) {
    require<FormatError>(params.contains(name), "checkpoint is missing parameter ", name);
    auto arr = read_array(dir, params[name], name);
    require<FormatError>(arr.shape == tensor.shape(), "parameter ", name, " has shape ",
                         shape_to_string(arr.shape), ", expected ", shape_to_string(tensor.shape()));
    Tensor target = tensor;
    auto dst = target.mutable_data();
    std::copy(arr.values.begin(), arr.values.end(), dst.begin());
  }
  return model;
}

}  // namespace ovis
