#pragma once

// Shared test helpers: central finite-difference gradient checking and random
// mesh generation. The FD oracle here is independent of the reverse-mode path
// it verifies: it only calls forward evaluations.

#include <functional>
#include <random>
#include <vector>

#include "deformcast/autodiff.hpp"
#include "deformcast/mesh.hpp"

namespace deformcast::testutil {

struct GradCheck {
    double max_rel_error = 0.0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t worst_input = 0;
};

/// build(tape, leaves) must assemble a scalar Var from the given leaf Vars
/// (one per input matrix). Analytic gradients from backward() are compared
/// against central differences with step h.
inline GradCheck grad_check(
    const std::vector<Mat>& inputs,
    const std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>& build,
    double h = 1e-5) {
    auto eval = [&](const std::vector<Mat>& values) {
        Tape<double> tape;
        std::vector<Var<double>> leaves;
        leaves.reserve(values.size());
        for (const Mat& m : values) leaves.push_back(tape.leaf(m, false));
        return build(tape, leaves).value()(0, 0);
    };

    // analytic pass
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (const Mat& m : inputs) leaves.push_back(tape.leaf(m, true));
    Var<double> loss = build(tape, leaves);
    tape.backward(loss);
    std::vector<Mat> analytic;
    analytic.reserve(inputs.size());
    for (const auto& leaf : leaves) analytic.push_back(leaf.grad());

    GradCheck out;
    std::vector<Mat> work = inputs;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (Eigen::Index j = 0; j < inputs[i].size(); ++j) {
            const double saved = work[i].data()[j];
            work[i].data()[j] = saved + h;
            const double fp = eval(work);
            work[i].data()[j] = saved - h;
            const double fm = eval(work);
            work[i].data()[j] = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[i].data()[j];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > out.max_rel_error) {
                out.max_rel_error = rel;
                out.worst_analytic = a;
                out.worst_numeric = numeric;
                out.worst_input = i;
            }
        }
    }
    return out;
}

inline Mat random_mat(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                      double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

/// Valid TriMesh with random geometry/topology; duplicate faces allowed.
inline TriMesh random_mesh(std::mt19937_64& rng, int max_faces, int max_verts = 60) {
    std::uniform_int_distribution<int> nverts(3, max_verts), nfaces(1, max_faces);
    std::uniform_real_distribution<double> coord(-2.0, 2.0);
    TriMesh mesh;
    const int n = nverts(rng);
    mesh.vertices.resize(n, 3);
    for (Eigen::Index i = 0; i < mesh.vertices.size(); ++i) mesh.vertices.data()[i] = coord(rng);
    std::uniform_int_distribution<int> vid(0, n - 1);
    const int f = nfaces(rng);
    while (static_cast<int>(mesh.faces.size()) < f) {
        int a = vid(rng), b = vid(rng), c = vid(rng);
        if (a == b || b == c || a == c) continue;
        mesh.faces.push_back({a, b, c});
    }
    return mesh;
}

/// Random connected-ish mesh graph for adjacency/propagation tests.
inline MeshGraph random_graph(std::mt19937_64& rng, int max_nodes = 50) {
    std::uniform_int_distribution<int> nn(2, max_nodes);
    const int n = nn(rng);
    MeshGraph g;
    g.positions = random_mat(rng, n, 3);
    std::uniform_int_distribution<int> vid(0, n - 1);
    std::uniform_int_distribution<int> ne(1, 3 * n);
    std::set<std::pair<int, int>> edges;
    const int want = ne(rng);
    for (int tries = 0; tries < 20 * want && static_cast<int>(edges.size()) < want; ++tries) {
        int a = vid(rng), b = vid(rng);
        if (a == b) continue;
        edges.emplace(std::min(a, b), std::max(a, b));
    }
    g.edges.assign(edges.begin(), edges.end());
    return g;
}

}  // namespace deformcast::testutil
