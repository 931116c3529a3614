// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <utility>
#include <vector>

#include "rmot/error.hpp"

namespace rmot {

/// Dense row-major n x m matrix of finite reals.
class CostMatrix {
 public:
  CostMatrix() = default;
  CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  CostMatrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ == 0 ? 0 : init.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      if (row.size() != cols_) {
        throw Error(ErrorCode::dimension_mismatch, "ragged cost matrix rows");
      }
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // sorted by row
  double total_cost = 0.0;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

namespace detail {

// Kuhn-Munkres with row/column potentials on a square matrix. Returns the
// column assigned to each row together with the final potentials.
struct SquareSolution {
  std::vector<std::size_t> col_of_row;
  std::vector<double> u, v;
};

inline SquareSolution hungarian_square(const std::vector<double>& a, std::size_t k) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based, index 0 is the virtual root column.
  std::vector<double> u(k + 1, 0.0), v(k + 1, 0.0);
  std::vector<std::size_t> p(k + 1, 0), way(k + 1, 0);
  auto cost = [&](std::size_t i, std::size_t j) { return a[(i - 1) * k + (j - 1)]; };

  for (std::size_t i = 1; i <= k; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(k + 1, inf);
    std::vector<char> used(k + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= k; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= k; ++j) {
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

  SquareSolution out;
  out.col_of_row.assign(k, 0);
  for (std::size_t j = 1; j <= k; ++j) out.col_of_row[p[j] - 1] = j - 1;
  out.u.assign(u.begin() + 1, u.end());
  out.v.assign(v.begin() + 1, v.end());
  return out;
}

// Among all perfect matchings using only zero-reduced-cost ("tight") edges,
// which are exactly the optimal ones, select the one whose column sequence is
// lexicographically smallest. Only the first `real_rows` rows matter for the
// order, and padding columns (index >= real_cols) are interchangeable.
inline void lexicographic_refine(std::vector<std::size_t>& col_of_row,
                                 const std::vector<std::vector<char>>& tight,
                                 std::size_t real_rows, std::size_t real_cols) {
  const std::size_t k = col_of_row.size();
  std::vector<std::size_t> row_of_col(k);
  for (std::size_t r = 0; r < k; ++r) row_of_col[col_of_row[r]] = r;
  std::vector<char> fixed(k, 0);

  // Re-seat `row` onto some column other than `banned`, through unfixed rows,
  // ending at column `target`. On success the matching is updated.
  std::vector<char> seen(k);
  auto reseat = [&](auto&& self, std::size_t row, std::size_t target,
                    std::size_t banned) -> bool {
    for (std::size_t c = 0; c < k; ++c) {
      if (!tight[row][c] || c == banned || seen[c]) continue;
      seen[c] = 1;
      if (c == target) {
        col_of_row[row] = c;
        row_of_col[c] = row;
        return true;
      }
      if (target >= real_cols && c >= real_cols) {
        // Padding columns hold identical costs: the owner of c moves to the
        // freed padding column at no cost.
        const std::size_t owner = row_of_col[c];
        col_of_row[owner] = target;
        row_of_col[target] = owner;
        col_of_row[row] = c;
        row_of_col[c] = row;
        return true;
      }
      const std::size_t owner = row_of_col[c];
      if (fixed[owner]) continue;
      if (self(self, owner, target, banned)) {
        col_of_row[row] = c;
        row_of_col[c] = row;
        return true;
      }
    }
    return false;
  };

  for (std::size_t r = 0; r < real_rows; ++r) {
    fixed[r] = 1;
    const std::size_t current = col_of_row[r];
    for (std::size_t c = 0; c < std::min(current, real_cols); ++c) {
      if (!tight[r][c] || fixed[row_of_col[c]]) continue;
      const std::size_t displaced = row_of_col[c];
      std::fill(seen.begin(), seen.end(), 0);
      if (reseat(reseat, displaced, current, c)) {
        col_of_row[r] = c;
        row_of_col[c] = r;
        break;
      }
    }
  }
}

}  // namespace detail

/**
 * Exact minimum-cost one-to-one assignment of size min(n, m).
 *
 * Rectangular inputs are padded to square with a constant; any pair touching
 * padding is dropped. Among equal-cost optima the pairing with the
 * lexicographically smallest (row, col) sequence is returned.
 */
inline Assignment solve_min_cost(const CostMatrix& c) {
  Assignment out;
  if (c.empty()) return out;
  const std::size_t n = c.rows(), m = c.cols(), k = std::max(n, m);

  double max_abs = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < m; ++j) {
      if (!std::isfinite(c(r, j))) {
        throw Error(ErrorCode::invalid_argument, "cost matrix entry is not finite");
      }
      max_abs = std::max(max_abs, std::abs(c(r, j)));
    }
  }
  // Padding cells all share one value; every padded row/col takes exactly one
  // of them, so the value cannot change which real pairs are optimal.
  const double pad = max_abs + 1.0;
  std::vector<double> a(k * k, pad);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < m; ++j) a[r * k + j] = c(r, j);

  auto sol = detail::hungarian_square(a, k);

  const double tol = 1e-10 * (1.0 + pad) * static_cast<double>(k);
  std::vector<std::vector<char>> tight(k, std::vector<char>(k, 0));
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t j = 0; j < k; ++j)
      tight[r][j] = (a[r * k + j] - sol.u[r] - sol.v[j]) <= tol;
  for (std::size_t r = 0; r < k; ++r) tight[r][sol.col_of_row[r]] = 1;
  detail::lexicographic_refine(sol.col_of_row, tight, n, m);

  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t j = sol.col_of_row[r];
    if (j < m) {
      out.pairs.emplace_back(r, j);
      out.total_cost += c(r, j);
    }
  }
  return out;
}

/// Maximum-score assignment; `total_cost` holds the (positive) total score.
inline Assignment solve_max_score(const CostMatrix& s) {
  CostMatrix neg(s.rows(), s.cols());
  for (std::size_t r = 0; r < s.rows(); ++r)
    for (std::size_t j = 0; j < s.cols(); ++j) neg(r, j) = -s(r, j);
  Assignment out = solve_min_cost(neg);
  out.total_cost = 0.0;
  for (const auto& [r, j] : out.pairs) out.total_cost += s(r, j);
  return out;
}

}  // namespace rmot
