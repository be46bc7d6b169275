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
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace ovis {

// Maps text into the shared embedding space. Implementations must be
// deterministic and return unit-norm vectors of length dim().
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> embed(std::string_view text) const = 0;
};

// Lowercases and splits on every non-alphanumeric byte.
std::vector<std::string> tokenize(std::string_view text);

// Deterministic stand-in for a text encoder: each token maps to a fixed
// Gaussian vector seeded by its bytes; a text embeds to the normalized mean
// of its token vectors.
class ToyEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit ToyEmbeddingProvider(std::size_t dim);
  std::size_t dim() const override { return dim_; }
  // ContractError when the text has no tokens.
  std::vector<double> embed(std::string_view text) const override;

 private:
  std::size_t dim_;
};

// Looks embeddings up in a table produced offline by a real encoder. The file
// is JSON: {"dim": C, "entries": {"text": [C floats], ...}}. Keys are matched
// after lowercasing and whitespace trimming.
class TableEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit TableEmbeddingProvider(const std::filesystem::path& file);
  std::size_t dim() const override { return dim_; }
  // DataError for text that is not in the table.
  std::vector<double> embed(std::string_view text) const override;

 private:
  std::size_t dim_ = 0;
  std::map<std::string, std::vector<double>> entries_;
};

// "toy" or "table:<path>". DataError when a table's width differs from dim.
std::unique_ptr<EmbeddingProvider> make_embedding_provider(const std::string& name, std::size_t dim);

double dot(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace ovis
