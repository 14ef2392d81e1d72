#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace doob {

struct Assignment {
  std::vector<std::size_t> row_to_col;
  double cost = 0.0;
};

/// Exact minimum-cost perfect matching on a dense n x n row-major cost matrix
/// (Hungarian method with potentials, O(n^3)).
Assignment solve_assignment(std::span<const double> cost, std::size_t n);

}  // namespace doob
