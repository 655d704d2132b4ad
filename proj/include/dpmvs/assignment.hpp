#pragma once

#include <vector>

#include "dpmvs/stats_kernels.hpp"

namespace dpmvs {

/// Minimum-cost assignment (Hungarian method with potentials). Requires
/// rows <= cols; returns the column assigned to each row.
std::vector<int> solve_assignment(const Matrix& cost);

}  // namespace dpmvs
