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

#include <algorithm>
#include <cmath>
#include <limits>

#include "ovis/error.hpp"
#include "ovis/training.hpp"

namespace ovis {

namespace {

// Kuhn augmenting path over the tight-edge graph.
bool augment(std::size_t row, const std::vector<std::vector<std::size_t>>& adj,
             std::vector<long>& col_owner, std::vector<char>& seen) {
  for (std::size_t c : adj[row]) {
    if (seen[c]) continue;
    seen[c] = 1;
    if (col_owner[c] < 0 || augment(static_cast<std::size_t>(col_owner[c]), adj, col_owner, seen)) {
      col_owner[c] = static_cast<long>(row);
      return true;
    }
  }
  return false;
}

// Rows `from..n-1` can be perfectly matched into the columns not in `taken`.
bool completes(std::size_t from, const std::vector<std::vector<std::size_t>>& adj,
               const std::vector<char>& taken) {
  const std::size_t n = adj.size();
  std::vector<long> owner(n, -1);
  std::vector<char> seen(n);
  for (std::size_t c = 0; c < n; ++c)
    if (taken[c]) owner[c] = -2;
  std::vector<std::vector<std::size_t>> free_adj(n);
  for (std::size_t r = from; r < n; ++r)
    for (std::size_t c : adj[r])
      if (!taken[c]) free_adj[r].push_back(c);
  for (std::size_t r = from; r < n; ++r) {
    std::fill(seen.begin(), seen.end(), 0);
    if (!augment(r, free_adj, owner, seen)) return false;
  }
  return true;
}

// Rows of `a` (n <= m) into its columns.
std::vector<long> solve_wide(const Matrix& a) {
  const std::size_t n = a.rows, m = a.cols;
  const std::size_t big = m;  // square size after zero-padding the rows
  auto cost = [&](std::size_t i, std::size_t j) { return i < n ? a(i, j) : 0.0; };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(big + 1, 0.0), v(big + 1, 0.0);
  std::vector<std::size_t> p(big + 1, 0), way(big + 1, 0);
  for (std::size_t i = 1; i <= big; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(big + 1, inf);
    std::vector<char> used(big + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= big; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= big; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  // Every optimal assignment uses only edges of zero reduced cost, so the
  // lexicographic choice is a greedy walk over that graph.
  double scale = 1.0;
  for (double x : a.data) scale = std::max(scale, std::abs(x));
  const double tol = 1e-11 * scale * static_cast<double>(big);
  std::vector<std::vector<std::size_t>> adj(big);
  for (std::size_t i = 0; i < big; ++i)
    for (std::size_t j = 0; j < big; ++j)
      if (cost(i, j) - u[i + 1] - v[j + 1] <= tol) adj[i].push_back(j);

  std::vector<long> out(n, -1);
  std::vector<char> taken(big, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : adj[i]) {
      if (taken[j]) continue;
      taken[j] = 1;
      if (completes(i + 1, adj, taken)) {
        out[i] = static_cast<long>(j);
        break;
      }
      taken[j] = 0;
    }
    if (out[i] < 0) {
      // Rounding left no tight completion; fall back to the solver's matching.
      std::vector<long> direct(n, -1);
      for (std::size_t j = 1; j <= big; ++j)
        if (p[j] >= 1 && p[j] <= n) direct[p[j] - 1] = static_cast<long>(j - 1);
      return direct;
    }
  }
  return out;
}

}  // namespace

std::vector<long> hungarian(const Matrix& cost) {
  for (double x : cost.data) require(std::isfinite(x), "assignment cost matrix has a non-finite entry");
  if (cost.rows == 0 || cost.cols == 0) return std::vector<long>(cost.rows, -1);
  if (cost.rows <= cost.cols) return solve_wide(cost);
  Matrix t(cost.cols, cost.rows);
  for (std::size_t i = 0; i < cost.rows; ++i)
    for (std::size_t j = 0; j < cost.cols; ++j) t(j, i) = cost(i, j);
  const auto col_to_row = solve_wide(t);
  std::vector<long> out(cost.rows, -1);
  for (std::size_t j = 0; j < col_to_row.size(); ++j) out[static_cast<std::size_t>(col_to_row[j])] = static_cast<long>(j);
  return out;
}

}  // namespace ovis
