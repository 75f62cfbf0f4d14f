#include "deformcast/autodiff.hpp"

#include <algorithm>
#include <cmath>

namespace deformcast {

SparseAdjacency build_adjacency(const MeshGraph& graph) {
    const int n = static_cast<int>(graph.node_count());
    std::vector<double> degree(static_cast<std::size_t>(n), 1.0);  // self-loop included
    for (const auto& [a, b] : graph.edges) {
        degree[static_cast<std::size_t>(a)] += 1.0;
        degree[static_cast<std::size_t>(b)] += 1.0;
    }

    SparseAdjacency s;
    s.node_count = n;
    s.entries.reserve(static_cast<std::size_t>(n) + 2 * graph.edges.size());
    for (int i = 0; i < n; ++i)
        s.entries.push_back({i, i, 1.0 / degree[static_cast<std::size_t>(i)]});
    for (const auto& [a, b] : graph.edges) {
        const double w =
            1.0 / std::sqrt(degree[static_cast<std::size_t>(a)] * degree[static_cast<std::size_t>(b)]);
        s.entries.push_back({a, b, w});
        s.entries.push_back({b, a, w});
    }
    std::sort(s.entries.begin(), s.entries.end(), [](const auto& x, const auto& y) {
        return x.row != y.row ? x.row < y.row : x.col < y.col;
    });
    return s;
}

}  // namespace deformcast
