#include "swarmdiff/micro/assignment.hpp"

#include <limits>

#include "swarmdiff/common/error.hpp"

namespace swarmdiff::micro {

Assignment assign_targets(std::span<const Vec2> positions, std::span<const Vec2> targets) {
  if (positions.size() != targets.size()) throw DomainError("assignment needs as many targets as robots");
  const int n = static_cast<int>(positions.size());
  Assignment out;
  if (n == 0) return out;

  auto cost = [&](int r, int t) { return (positions[r] - targets[t]).squaredNorm(); };
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based rows/columns; column 0 is the virtual start of each augmentation.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> row_of(n + 1, 0), way(n + 1, 0);
  for (int r = 1; r <= n; ++r) {
    row_of[0] = r;
    int col = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[col] = true;
      const int row = row_of[col];
      double delta = inf;
      int next = 0;
      for (int c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const double reduced = cost(row - 1, c - 1) - u[row] - v[c];
        if (reduced < minv[c]) {
          minv[c] = reduced;
          way[c] = col;
        }
        if (minv[c] < delta) {
          delta = minv[c];
          next = c;
        }
      }
      for (int c = 0; c <= n; ++c) {
        if (used[c]) {
          u[row_of[c]] += delta;
          v[c] -= delta;
        } else {
          minv[c] -= delta;
        }
      }
      col = next;
    } while (row_of[col] != 0);
    do {
      const int prev = way[col];
      row_of[col] = row_of[prev];
      col = prev;
    } while (col != 0);
  }
  out.mapping.assign(static_cast<std::size_t>(n), -1);
  for (int c = 1; c <= n; ++c) out.mapping[row_of[c] - 1] = c - 1;
  for (int r = 0; r < n; ++r) out.objective += cost(r, out.mapping[r]);
  return out;
}

bool is_permutation(const std::vector<int>& mapping) {
  std::vector<bool> seen(mapping.size(), false);
  for (int m : mapping) {
    if (m < 0 || m >= static_cast<int>(mapping.size()) || seen[m]) return false;
    seen[m] = true;
  }
  return true;
}

}  // namespace swarmdiff::micro
