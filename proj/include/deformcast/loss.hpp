#pragma once

#include <cmath>

#include "deformcast/autodiff.hpp"
#include "deformcast/mesh.hpp"
#include "deformcast/types.hpp"

namespace deformcast {

struct LossReport {
    double l_mse = 0.0;
    double l_graph = 0.0;
    double l_total = 0.0;
    double lambda_g = 0.0;
};

/// (1/N) sum_i ||pred_i - truth_i||^2, differentiable through pred.
template <class Scalar>
Var<Scalar> mse_loss(const Var<Scalar>& pred, const MatX<Scalar>& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
        throw std::invalid_argument("mse_loss: shapes differ, " +
                                    shape_str(pred.rows(), pred.cols()) + " vs " +
                                    shape_str(truth.rows(), truth.cols()));
    if (pred.rows() < 1) throw std::invalid_argument("mse_loss: empty input");
    const Eigen::Index n = pred.rows();
    MatX<Scalar> diff = pred.value() - truth;
    MatX<Scalar> v(1, 1);
    v(0, 0) = diff.squaredNorm() / static_cast<Scalar>(n);
    Tape<Scalar>& t = pred.tape();
    const int ip = pred.id();
    return t.make_node(std::move(v), pred.requires_grad(),
                       [ip, diff = std::move(diff), n](Tape<Scalar>& t, int,
                                                       const MatX<Scalar>& g) {
                           if (!t.wants_grad(ip)) return;
                           t.accumulate(
                               ip, (diff.array() * (Scalar(2) * g(0, 0) / static_cast<Scalar>(n)))
                                       .matrix());
                       });
}

/// Plain-matrix MSE, the evaluation-metric form of the same sum.
template <class Scalar>
double mse_metric(const MatX<Scalar>& pred, const MatX<Scalar>& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
        throw std::invalid_argument("mse_metric: shapes differ, " +
                                    shape_str(pred.rows(), pred.cols()) + " vs " +
                                    shape_str(truth.rows(), truth.cols()));
    return static_cast<double>((pred - truth).squaredNorm()) / static_cast<double>(pred.rows());
}

/// Mean absolute error over all 3N coordinates.
template <class Scalar>
double mae_metric(const MatX<Scalar>& pred, const MatX<Scalar>& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
        throw std::invalid_argument("mae_metric: shapes differ, " +
                                    shape_str(pred.rows(), pred.cols()) + " vs " +
                                    shape_str(truth.rows(), truth.cols()));
    return static_cast<double>((pred - truth).template cast<double>().cwiseAbs().mean());
}

/// (1/E) sum_edges || (rest_j - rest_i) - (pred_j - pred_i) ||_2 over the rest
/// graph's edges in canonical orientation. Differentiable through pred; the
/// per-edge L2 norm gets subgradient 0 where the difference vanishes.
template <class Scalar>
Var<Scalar> graph_consistency(const MeshGraph& rest, const Var<Scalar>& pred) {
    if (pred.rows() != rest.node_count())
        throw std::invalid_argument("graph_consistency: prediction has " +
                                    std::to_string(pred.rows()) + " rows for " +
                                    std::to_string(rest.node_count()) + " rest nodes");
    if (rest.edges.empty()) throw std::invalid_argument("graph_consistency: graph has no edges");

    const auto edges = rest.edges;  // copied for the closure
    const Eigen::Index ecount = static_cast<Eigen::Index>(edges.size());
    const MatX<Scalar>& p = pred.value();
    MatX3T<Scalar> rest_pos = rest.positions.cast<Scalar>();

    double total = 0.0;
    for (const auto& [i, j] : edges) {
        Eigen::Matrix<Scalar, 1, 3> d =
            (rest_pos.row(j) - rest_pos.row(i)) - (p.row(j) - p.row(i));
        total += static_cast<double>(d.norm());
    }
    MatX<Scalar> v(1, 1);
    v(0, 0) = static_cast<Scalar>(total / static_cast<double>(ecount));

    Tape<Scalar>& t = pred.tape();
    const int ip = pred.id();
    return t.make_node(
        std::move(v), pred.requires_grad(),
        [ip, edges, rest_pos = std::move(rest_pos), ecount](Tape<Scalar>& t, int,
                                                            const MatX<Scalar>& g) {
            if (!t.wants_grad(ip)) return;
            const MatX<Scalar>& p = t.value(ip);
            MatX<Scalar> dp = MatX<Scalar>::Zero(p.rows(), p.cols());
            const Scalar w = g(0, 0) / static_cast<Scalar>(ecount);
            for (const auto& [i, j] : edges) {
                Eigen::Matrix<Scalar, 1, 3> d =
                    (rest_pos.row(j) - rest_pos.row(i)) - (p.row(j) - p.row(i));
                const Scalar norm = d.norm();
                if (norm <= Scalar(0)) continue;
                // d/dpred of ||d|| with d = (rest edge) - (pred_j - pred_i)
                Eigen::Matrix<Scalar, 1, 3> unit = d / norm;
                dp.row(i) += w * unit;
                dp.row(j) -= w * unit;
            }
            t.accumulate(ip, dp);
        });
}

template <class Scalar>
double graph_consistency_metric(const MeshGraph& rest, const MatX<Scalar>& pred) {
    if (rest.edges.empty()) throw std::invalid_argument("graph_consistency: graph has no edges");
    double total = 0.0;
    for (const auto& [i, j] : rest.edges) {
        Vec3 r = (rest.positions.row(j) - rest.positions.row(i)).transpose();
        Vec3 d = (pred.row(j) - pred.row(i)).transpose().template cast<double>();
        total += (r - d).norm();
    }
    return total / static_cast<double>(rest.edges.size());
}

/// Edge-vector discrepancy between two predicted/label position sets over the
/// same edge list (the "consistency vs ground truth" flavor).
template <class Scalar>
double graph_consistency_between(const MeshGraph& edges_from, const MatX<Scalar>& a,
                                 const MatX<Scalar>& b) {
    if (edges_from.edges.empty())
        throw std::invalid_argument("graph_consistency: graph has no edges");
    double total = 0.0;
    for (const auto& [i, j] : edges_from.edges) {
        Vec3 da = (a.row(j) - a.row(i)).transpose().template cast<double>();
        Vec3 db = (b.row(j) - b.row(i)).transpose().template cast<double>();
        total += (da - db).norm();
    }
    return total / static_cast<double>(edges_from.edges.size());
}

template <class Scalar>
struct TotalLoss {
    Var<Scalar> l_mse;
    Var<Scalar> l_graph;
    Var<Scalar> l_total;
    LossReport report;
};

/// L_T = L_mse + lambda_g * L_G, assembled on the tape.
template <class Scalar>
TotalLoss<Scalar> total_loss(const Var<Scalar>& pred, const MatX<Scalar>& truth,
                             const MeshGraph& rest, double lambda_g) {
    if (lambda_g < 0.0) throw std::invalid_argument("lambda_g must be >= 0");
    TotalLoss<Scalar> out{mse_loss(pred, truth), graph_consistency(rest, pred), Var<Scalar>{}, {}};
    out.l_total = add(out.l_mse, scale(out.l_graph, static_cast<Scalar>(lambda_g)));
    out.report.l_mse = static_cast<double>(out.l_mse.value()(0, 0));
    out.report.l_graph = static_cast<double>(out.l_graph.value()(0, 0));
    out.report.l_total = static_cast<double>(out.l_total.value()(0, 0));
    out.report.lambda_g = lambda_g;
    return out;
}

}  // namespace deformcast
