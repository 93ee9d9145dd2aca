#pragma once

#include <span>
#include <vector>

#include "swarmdiff/common/types.hpp"

namespace swarmdiff::micro {

struct Assignment {
  std::vector<int> mapping;  ///< robot k takes target mapping[k]; a permutation
  double objective = 0.0;    ///< sum of squared travel distances
};

/// Exact minimum of sum_k |p_k - t_mapping(k)|^2 by the Hungarian method with
/// potentials (shortest augmenting paths), O(n^3). Throws DomainError on a
/// size mismatch.
Assignment assign_targets(std::span<const Vec2> positions, std::span<const Vec2> targets);

bool is_permutation(const std::vector<int>& mapping);

}  // namespace swarmdiff::micro
