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

#include "ovis/embedding.hpp"

#include <cctype>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "ovis/error.hpp"
#include "ovis/random.hpp"

namespace ovis {

namespace {

void normalize_in_place(std::vector<double>& v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double n = std::sqrt(ss);
  require<DomainError>(n > 0.0, "cannot normalize a zero embedding");
  for (double& x : v) x /= n;
}

std::string normalize_key(std::string_view text) {
  std::size_t b = 0, e = text.size();
  while (b < e && std::isspace(static_cast<unsigned char>(text[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(text[e - 1]))) --e;
  std::string key(text.substr(b, e - b));
  for (auto& ch : key) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return key;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto uc = static_cast<unsigned char>(ch);
    if (std::isalnum(uc)) {
      current.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const std::string& name, std::size_t dim) {
  if (name == "toy") return std::make_unique<ToyEmbeddingProvider>(dim);
  const std::string prefix = "table:";
  if (name.rfind(prefix, 0) == 0) {
    auto table = std::make_unique<TableEmbeddingProvider>(name.substr(prefix.size()));
    require<DataError>(table->dim() == dim, "embedding table '", name.substr(prefix.size()), "' has width ",
                       table->dim(), " but ", dim, " is required");
    return table;
  }
  fail("unknown text encoder '", name, "' (expected toy or table:<path>)");
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  require<DimensionError>(a.size() == b.size(), "dot of lengths ", a.size(), " and ", b.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

ToyEmbeddingProvider::ToyEmbeddingProvider(std::size_t dim) : dim_(dim) {
  require(dim >= 1, "embedding dimension must be >= 1");
}

std::vector<double> ToyEmbeddingProvider::embed(std::string_view text) const {
  const auto tokens = tokenize(text);
  require(!tokens.empty(), "cannot embed text without tokens: '", text, "'");
  std::vector<double> acc(dim_, 0.0);
  for (const auto& token : tokens) {
    Rng rng(fnv1a(token));
    for (auto& v : acc) v += rng.gaussian();
  }
  for (auto& v : acc) v /= static_cast<double>(tokens.size());
  normalize_in_place(acc);
  return acc;
}

TableEmbeddingProvider::TableEmbeddingProvider(const std::filesystem::path& file) {
  std::ifstream in(file);
  require<IoError>(static_cast<bool>(in), "cannot open embedding table ", file.string());
  try {
    const auto j = nlohmann::json::parse(in);
    dim_ = j.at("dim").get<std::size_t>();
    require<FormatError>(dim_ >= 1, "embedding table dim must be >= 1");
    for (const auto& [text, vec] : j.at("entries").items()) {
      auto v = vec.get<std::vector<double>>();
      require<FormatError>(v.size() == dim_, "embedding for '", text, "' has ", v.size(),
                           " values, expected ", dim_);
      normalize_in_place(v);
      entries_[normalize_key(text)] = std::move(v);
    }
  } catch (const nlohmann::json::exception& e) {
    fail<FormatError>("embedding table ", file.string(), ": ", e.what());
  }
}

std::vector<double> TableEmbeddingProvider::embed(std::string_view text) const {
  const auto key = normalize_key(text);
  require(!key.empty(), "cannot embed empty text");
  auto it = entries_.find(key);
  require<DataError>(it != entries_.end(), "no embedding for '", text, "' in table");
  return it->second;
}

}  // namespace ovis
