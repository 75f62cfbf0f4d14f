#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "deformcast/loss.hpp"
#include "test_util.hpp"

using namespace deformcast;
using testutil::grad_check;
using testutil::random_mat;

namespace {

MeshGraph two_node_graph(const Vec3& a, const Vec3& b) {
    MeshGraph g;
    g.positions.resize(2, 3);
    g.positions << a.transpose(), b.transpose();
    g.edges = {{0, 1}};
    return g;
}

double eval_mse(const Mat& pred, const Mat& truth) {
    Tape<double> t;
    return mse_loss(t.constant(pred), truth).value()(0, 0);
}

double eval_consistency(const MeshGraph& rest, const Mat& pred) {
    Tape<double> t;
    return graph_consistency(rest, t.constant(pred)).value()(0, 0);
}

}  // namespace

TEST_CASE("mse_loss examples") {
    CHECK(eval_mse(Mat::Ones(3, 3), Mat::Ones(3, 3)) == 0.0);

    Mat pred(1, 3), truth(1, 3);
    pred << 1, 0, 0;
    truth << 0, 0, 0;
    CHECK(eval_mse(pred, truth) == doctest::Approx(1.0));

    Mat pred2(2, 3), truth2(2, 3);
    pred2 << 0, 2, 0, 0, 0, 0;
    truth2 << 0, 0, 0, 0, 0, 0;
    CHECK(eval_mse(pred2, truth2) == doctest::Approx(2.0));  // (4 + 0) / 2
}

TEST_CASE("mse_loss shape mismatch") {
    Tape<double> t;
    CHECK_THROWS_AS(mse_loss(t.constant(Mat::Zero(2, 3)), Mat(Mat::Zero(3, 3))),
                    std::invalid_argument);
}

TEST_CASE("mse positivity: zero iff pred equals truth") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 10; ++i) {
        const Mat truth = random_mat(rng, 5, 3);
        Mat pred = truth;
        CHECK(eval_mse(pred, truth) == 0.0);
        pred(2, 1) += 1e-3;
        CHECK(eval_mse(pred, truth) > 0.0);
    }
}

TEST_CASE("graph_consistency examples") {
    const MeshGraph rest = two_node_graph({0, 0, 0}, {1, 0, 0});
    CHECK(eval_consistency(rest, rest.positions) == 0.0);

    Mat pred(2, 3);
    pred << 0, 0, 0, 1, 1, 0;  // edge vector (1,1,0) vs rest (1,0,0)
    CHECK(eval_consistency(rest, pred) == doctest::Approx(1.0));
}

TEST_CASE("graph_consistency is exactly invariant under global translation") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        MeshGraph rest;
        rest.positions = random_mat(rng, 12, 3);
        for (int i = 0; i + 1 < 12; i += 2) rest.edges.emplace_back(i, i + 1);
        rest.edges.emplace_back(0, 11);
        const Mat pred = random_mat(rng, 12, 3);
        Mat translated = pred;
        const Vec3 t(0.37, -1.4, 2.6);
        translated.rowwise() += t.transpose();
        CHECK(std::abs(eval_consistency(rest, pred) - eval_consistency(rest, translated)) <
              1e-12);
    }
}

TEST_CASE("graph_consistency is independent of stored edge orientation") {
    std::mt19937_64 rng(6);
    MeshGraph rest;
    rest.positions = random_mat(rng, 8, 3);
    rest.edges = {{0, 1}, {1, 2}, {2, 3}, {4, 5}, {5, 6}, {0, 7}};
    const Mat pred = random_mat(rng, 8, 3);
    const double base = eval_consistency(rest, pred);

    MeshGraph flipped = rest;
    std::shuffle(flipped.edges.begin(), flipped.edges.end(), rng);
    for (auto& [a, b] : flipped.edges)
        if (rng() % 2) std::swap(a, b);
    CHECK(std::abs(eval_consistency(flipped, pred) - base) < 1e-12);
}

TEST_CASE("graph_consistency requires edges") {
    MeshGraph rest;
    rest.positions = MatX3::Zero(3, 3);
    Tape<double> t;
    CHECK_THROWS_AS(graph_consistency(rest, t.constant(Mat::Zero(3, 3))),
                    std::invalid_argument);
}

TEST_CASE("mae examples") {
    CHECK(mae_metric<double>(Mat::Ones(4, 3), Mat::Ones(4, 3)) == 0.0);
    Mat pred(1, 3), truth = Mat::Zero(1, 3);
    pred << 3, 0, 0;
    CHECK(mae_metric<double>(pred, truth) == doctest::Approx(1.0));  // |3| / 3
    pred << 1, 1, 1;
    CHECK(mae_metric<double>(pred, truth) == doctest::Approx(1.0));
}

TEST_CASE("total_loss assembles the weighted sum") {
    std::mt19937_64 rng(7);
    MeshGraph rest;
    rest.positions = random_mat(rng, 6, 3);
    rest.edges = {{0, 1}, {2, 3}, {4, 5}, {1, 2}};
    const Mat truth = random_mat(rng, 6, 3);
    const Mat pred = random_mat(rng, 6, 3);

    Tape<double> t;
    const auto out = total_loss(t.constant(pred), truth, rest, 0.1);
    CHECK(out.report.l_total ==
          doctest::Approx(out.report.l_mse + 0.1 * out.report.l_graph).epsilon(1e-9));
    CHECK(out.report.l_mse >= 0.0);
    CHECK(out.report.l_graph >= 0.0);

    Tape<double> t0;
    const auto zero = total_loss(t0.constant(pred), truth, rest, 0.0);
    CHECK(zero.report.l_total == zero.report.l_mse);

    Tape<double> ti;
    const auto ident = total_loss(ti.constant(rest.positions), Mat(rest.positions), rest, 0.5);
    CHECK(ident.report.l_mse == 0.0);
    CHECK(ident.report.l_graph == 0.0);
    CHECK(ident.report.l_total == 0.0);
}

TEST_CASE("total_loss formula instance: 2.0 + 0.1 * 1.0") {
    // pred/truth engineered so l_mse = 2 and l_graph = 1
    MeshGraph rest = two_node_graph({0, 0, 0}, {1, 0, 0});
    Mat truth(2, 3), pred(2, 3);
    truth << 0, 0, 0, 1, 0, 0;
    pred << 0, 0, 0, 1, 2, 0;  // node 1 offset by (0,2,0): mse = 4/2 = 2; edge diff = 1...
    Tape<double> t;
    const auto out = total_loss(t.constant(pred), truth, rest, 0.1);
    CHECK(out.report.l_mse == doctest::Approx(2.0));
    CHECK(out.report.l_graph == doctest::Approx(2.0));  // ||(1,0,0)-(1,2,0)|| = 2
    CHECK(out.report.l_total == doctest::Approx(2.0 + 0.1 * 2.0).epsilon(1e-9));
}

TEST_CASE("loss decomposition holds on random inputs to 1e-9 relative") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        MeshGraph rest;
        rest.positions = random_mat(rng, 10, 3);
        rest.edges = {{0, 1}, {1, 2}, {3, 4}, {5, 6}, {7, 8}, {8, 9}, {0, 9}};
        const Mat truth = random_mat(rng, 10, 3);
        const Mat pred = random_mat(rng, 10, 3);
        std::uniform_real_distribution<double> ul(0.0, 2.0);
        const double lambda = ul(rng);
        Tape<double> t;
        const auto out = total_loss(t.constant(pred), truth, rest, lambda);
        const double expect = out.report.l_mse + lambda * out.report.l_graph;
        CHECK(std::abs(out.report.l_total - expect) <= 1e-9 * std::max(1.0, std::abs(expect)));
    }
}

TEST_CASE("analytic gradients of all three losses match finite differences") {
    std::mt19937_64 rng(11);
    MeshGraph rest;
    rest.positions = random_mat(rng, 8, 3);
    rest.edges = {{0, 1}, {1, 2}, {2, 3}, {4, 5}, {6, 7}, {0, 7}};
    const Mat truth = random_mat(rng, 8, 3);
    const Mat pred = random_mat(rng, 8, 3);

    auto mse_build = [&](Tape<double>& t, const std::vector<Var<double>>& v) {
        return mse_loss(v[0], truth);
    };
    CHECK(grad_check({pred}, mse_build).max_rel_error < 1e-4);

    auto graph_build = [&](Tape<double>& t, const std::vector<Var<double>>& v) {
        return graph_consistency(rest, v[0]);
    };
    CHECK(grad_check({pred}, graph_build).max_rel_error < 1e-4);

    auto total_build = [&](Tape<double>& t, const std::vector<Var<double>>& v) {
        return total_loss(v[0], truth, rest, 0.37).l_total;
    };
    CHECK(grad_check({pred}, total_build).max_rel_error < 1e-4);
}

TEST_CASE("total_loss rejects negative lambda") {
    MeshGraph rest = two_node_graph({0, 0, 0}, {1, 0, 0});
    Tape<double> t;
    CHECK_THROWS_AS(total_loss(t.constant(rest.positions), Mat(rest.positions), rest, -0.1),
                    std::invalid_argument);
}
