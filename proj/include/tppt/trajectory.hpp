#pragma once

#include <cstdint>
#include <vector>

namespace tppt {

// Length-T sequence of node tokens in {0..V}; 0 marks unobserved or absent
// steps, repeats encode dwell time on an edge.
using Trajectory = std::vector<std::int32_t>;

// Length of the prefix before trailing padding zeros.
inline int real_length(const Trajectory& traj) {
    int len = static_cast<int>(traj.size());
    while (len > 0 && traj[static_cast<std::size_t>(len - 1)] == 0) --len;
    return len;
}

} // namespace tppt
