#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "deformcast/model.hpp"
#include "deformcast/shapes.hpp"
#include "test_util.hpp"

using namespace deformcast;
using testutil::grad_check;
using testutil::random_mat;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.hidden = 16;
    cfg.tag_hops = 2;
    cfg.encoder_layers = 2;
    cfg.decoder_layers = 2;
    cfg.heads = 2;
    return cfg;
}

template <class Scalar>
bool params_equal(const ModelParams<Scalar>& a, const ModelParams<Scalar>& b) {
    bool equal = true;
    std::vector<const MatX<Scalar>*> av, bv;
    for_each_block(a, [&](const std::string&, const MatX<Scalar>& m) { av.push_back(&m); });
    for_each_block(b, [&](const std::string&, const MatX<Scalar>& m) { bv.push_back(&m); });
    if (av.size() != bv.size()) return false;
    for (std::size_t i = 0; i < av.size(); ++i) {
        if (av[i]->rows() != bv[i]->rows() || av[i]->cols() != bv[i]->cols()) return false;
        if (std::memcmp(av[i]->data(), bv[i]->data(),
                        sizeof(Scalar) * static_cast<std::size_t>(av[i]->size())) != 0)
            equal = false;
    }
    return equal;
}

MeshGraph ring_graph(int n) {
    MeshGraph g;
    g.positions = MatX3::Random(n, 3);
    for (int i = 0; i < n; ++i) g.edges.emplace_back(std::min(i, (i + 1) % n), std::max(i, (i + 1) % n));
    std::sort(g.edges.begin(), g.edges.end());
    g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
    return g;
}

}  // namespace

TEST_CASE("init_params is bitwise deterministic per seed") {
    const ModelConfig cfg;  // full-size defaults
    const auto a = init_params<double>(cfg, 42);
    const auto b = init_params<double>(cfg, 42);
    CHECK(params_equal(a, b));
    const auto c = init_params<double>(cfg, 43);
    CHECK(!params_equal(a, c));
}

TEST_CASE("init_params zero biases and glorot bound") {
    const ModelConfig cfg;
    const auto p = init_params<double>(cfg, 1);
    CHECK(p.soft_embed_b.cwiseAbs().maxCoeff() == 0.0);
    CHECK(p.rigid_embed_b.cwiseAbs().maxCoeff() == 0.0);
    CHECK(p.out_b.cwiseAbs().maxCoeff() == 0.0);
    for (const auto& layer : p.soft_encoder) CHECK(layer.bias.cwiseAbs().maxCoeff() == 0.0);
    // 21 -> 256 embed bound
    const double bound = std::sqrt(6.0 / 277.0);
    CHECK(p.soft_embed_w.cwiseAbs().maxCoeff() <= bound);
    CHECK(p.soft_embed_w.cwiseAbs().maxCoeff() > 0.5 * bound);  // actually fills the range
    CHECK(p.soft_embed_w.rows() == 21);
    CHECK(p.soft_embed_w.cols() == 256);
    CHECK(p.rigid_embed_w.rows() == 25);
}

TEST_CASE("model width contract: 21/25 inputs, 256 hidden") {
    const ModelConfig cfg;
    CHECK(cfg.soft_width() == 21);
    CHECK(cfg.rigid_width() == 25);
    CHECK(cfg.hidden == 256);
    const auto p = init_params<float>(cfg, 0);
    for (const auto& layer : p.soft_encoder) {
        CHECK(layer.hop_weights.size() == 4);  // K + 1
        for (const auto& w : layer.hop_weights) {
            CHECK(w.rows() == 256);
            CHECK(w.cols() == 256);
        }
    }
    CHECK(p.attention.wq.size() == 4);
    CHECK(p.attention.wq[0].cols() == 64);
    CHECK(p.out_w.cols() == 3);
}

TEST_CASE("ModelConfig validation") {
    ModelConfig cfg;
    cfg.heads = 5;  // 256 % 5 != 0
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ModelConfig{};
    cfg.num_frequencies = 2;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ModelConfig{};
    cfg.encoder_layers = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("tagconv with no edges reduces to X * sum(W_k) + b") {
    std::mt19937_64 rng(4);
    MeshGraph g;
    g.positions = MatX3::Random(6, 3);  // no edges: adjacency = I
    const SparseAdjacency adj = build_adjacency(g);
    const Mat x = random_mat(rng, 6, 5);
    std::vector<Mat> weights = {random_mat(rng, 5, 4), random_mat(rng, 5, 4),
                                random_mat(rng, 5, 4)};
    const Mat bias = random_mat(rng, 1, 4);

    Tape<double> t;
    std::vector<Var<double>> wv;
    for (const auto& w : weights) wv.push_back(t.constant(w));
    const Mat got = tagconv_forward(t.constant(x), adj, wv, t.constant(bias)).value();
    const Mat expected = (x * (weights[0] + weights[1] + weights[2])).rowwise() + bias.row(0);
    CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tagconv with K=0 is a plain linear layer") {
    std::mt19937_64 rng(5);
    const MeshGraph g = ring_graph(5);
    const SparseAdjacency adj = build_adjacency(g);
    const Mat x = random_mat(rng, 5, 3), w = random_mat(rng, 3, 2), b = random_mat(rng, 1, 2);
    Tape<double> t;
    const Mat got = tagconv_forward(t.constant(x), adj, {t.constant(w)}, t.constant(b)).value();
    CHECK((got - ((x * w).rowwise() + b.row(0))).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tagconv on a 2-node path matches the dense hand computation") {
    std::mt19937_64 rng(6);
    MeshGraph g;
    g.positions = MatX3::Random(2, 3);
    g.edges = {{0, 1}};
    const SparseAdjacency adj = build_adjacency(g);  // dense form: [[.5,.5],[.5,.5]]
    Mat dense(2, 2);
    dense << 0.5, 0.5, 0.5, 0.5;
    const Mat x = random_mat(rng, 2, 3), w0 = random_mat(rng, 3, 2), w1 = random_mat(rng, 3, 2);
    const Mat b = random_mat(rng, 1, 2);
    Tape<double> t;
    const Mat got =
        tagconv_forward(t.constant(x), adj, {t.constant(w0), t.constant(w1)}, t.constant(b))
            .value();
    const Mat expected = (x * w0 + dense * x * w1).rowwise() + b.row(0);
    CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross_attention with a single rigid node broadcasts its value row") {
    std::mt19937_64 rng(7);
    const int hidden = 8, dh = 8;
    const Mat soft = random_mat(rng, 3, hidden), rigid = random_mat(rng, 1, hidden);
    const Mat wq = random_mat(rng, hidden, dh), wk = random_mat(rng, hidden, dh),
              wv = random_mat(rng, hidden, dh);
    const Mat wo = random_mat(rng, dh, hidden);
    Tape<double> t;
    const Mat got = cross_attention(t.constant(soft), t.constant(rigid), {t.constant(wq)},
                                    {t.constant(wk)}, {t.constant(wv)}, t.constant(wo))
                        .value();
    // softmax over one key is 1: every soft row gets rigid_v * wo plus residual
    const Mat payload = (rigid * wv) * wo;
    for (int r = 0; r < 3; ++r)
        CHECK((got.row(r) - (soft.row(r) + payload.row(0))).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross_attention with identical rigid rows sends every node the same payload") {
    std::mt19937_64 rng(8);
    const int hidden = 8;
    const Mat soft = random_mat(rng, 4, hidden);
    Mat rigid(3, hidden);
    const Mat row = random_mat(rng, 1, hidden);
    rigid << row, row, row;
    const Mat wq = random_mat(rng, hidden, 4), wk = random_mat(rng, hidden, 4),
              wv = random_mat(rng, hidden, 4), wo = random_mat(rng, 4, hidden);
    Tape<double> t;
    const Mat got = cross_attention(t.constant(soft), t.constant(rigid), {t.constant(wq)},
                                    {t.constant(wk)}, {t.constant(wv)}, t.constant(wo))
                        .value();
    const Mat payload = got - soft;
    for (int r = 1; r < 4; ++r)
        CHECK((payload.row(r) - payload.row(0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross_attention 2x2 single head matches the scalar hand computation") {
    // hand-set identity-like projections in a 2-wide space
    Mat soft(2, 2), rigid(2, 2);
    soft << 1.0, 0.0, 0.0, 1.0;
    rigid << 2.0, 0.0, 0.0, 2.0;
    const Mat eye = Mat::Identity(2, 2);
    Tape<double> t;
    const Mat got = cross_attention(t.constant(soft), t.constant(rigid), {t.constant(eye)},
                                    {t.constant(eye)}, {t.constant(eye)}, t.constant(eye))
                        .value();
    // scores row 0: [q.k1, q.k2]/sqrt(2) = [2, 0]/1.4142; softmax -> [a, 1-a]
    const double s = 2.0 / std::sqrt(2.0);
    const double a = std::exp(s) / (std::exp(s) + 1.0);
    Mat expected(2, 2);
    expected << 1.0 + 2.0 * a, 2.0 * (1.0 - a), 2.0 * (1.0 - a), 1.0 + 2.0 * a;
    CHECK((got - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross_attention rejects an empty rigid graph") {
    Tape<double> t;
    Var<double> soft = t.constant(Mat::Zero(2, 4));
    Var<double> rigid = t.constant(Mat::Zero(0, 4));
    Var<double> w = t.constant(Mat::Zero(4, 2));
    CHECK_THROWS_AS(cross_attention(soft, rigid, {w}, {w}, {w}, t.constant(Mat::Zero(2, 4))),
                    std::invalid_argument);
}

TEST_CASE("attention rows are valid distributions inside forward") {
    std::mt19937_64 rng(12);
    Tape<double> t;
    Var<double> scores = t.constant(random_mat(rng, 10, 7, 3.0));
    const Mat probs = softmax_rows(scores).value();
    for (Eigen::Index r = 0; r < probs.rows(); ++r)
        CHECK(probs.row(r).sum() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("forward with zeroed output layer reproduces rest positions bitwise") {
    const ModelConfig cfg = tiny_config();
    auto params = init_params<double>(cfg, 3);
    params.out_w.setZero();
    params.out_b.setZero();
    const MeshGraph soft = build_graph(make_uv_sphere(0.5, 10, 8));
    const MeshGraph rigid = build_graph(make_icosphere(0.2, 0));
    const MatX3 pred =
        forward(soft, rigid, ForceDescriptor::from_vector(Vec3(0, 1, 0)), params, cfg);
    CHECK((pred - soft.positions).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward output shape is N_soft x 3") {
    const ModelConfig cfg = tiny_config();
    const auto params = init_params<double>(cfg, 3);
    MeshGraph soft = ring_graph(64);
    MeshGraph rigid = ring_graph(100);
    const MatX3 pred = forward(soft, rigid, ForceDescriptor{}, params, cfg);
    CHECK(pred.rows() == 64);
    CHECK(pred.cols() == 3);
}

TEST_CASE("forward is deterministic and permutation equivariant") {
    std::mt19937_64 rng(10);
    const ModelConfig cfg = tiny_config();
    const auto params = init_params<double>(cfg, 5);

    for (int trial = 0; trial < 5; ++trial) {
        MeshGraph soft = testutil::random_graph(rng, 24);
        MeshGraph rigid = testutil::random_graph(rng, 16);
        const ForceDescriptor force = ForceDescriptor::from_vector(Vec3(0.3, -1.2, 0.5));

        const MatX3 base = forward(soft, rigid, force, params, cfg);
        CHECK((forward(soft, rigid, force, params, cfg) - base).cwiseAbs().maxCoeff() == 0.0);

        // permute soft nodes and edges consistently
        const int n = static_cast<int>(soft.node_count());
        std::vector<int> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);  // perm[old] = new
        MeshGraph permuted;
        permuted.positions.resize(n, 3);
        for (int i = 0; i < n; ++i) permuted.positions.row(perm[i]) = soft.positions.row(i);
        for (const auto& [a, b] : soft.edges) {
            const int pa = perm[a], pb = perm[b];
            permuted.edges.emplace_back(std::min(pa, pb), std::max(pa, pb));
        }
        std::sort(permuted.edges.begin(), permuted.edges.end());
        const MatX3 pred_perm = forward(permuted, rigid, force, params, cfg);
        double max_err = 0.0;
        for (int i = 0; i < n; ++i)
            max_err = std::max(max_err,
                               (pred_perm.row(perm[i]) - base.row(i)).cwiseAbs().maxCoeff());
        CHECK(max_err < 1e-5);
    }
}

TEST_CASE("gradient flows through the whole model on a toy instance") {
    std::mt19937_64 rng(20);
    ModelConfig cfg = tiny_config();
    MeshGraph soft = ring_graph(10);
    MeshGraph rigid = ring_graph(6);
    const SparseAdjacency soft_adj = build_adjacency(soft);
    const SparseAdjacency rigid_adj = build_adjacency(rigid);
    const Mat soft_feats = encode_soft<double>(soft).matrix;
    const Mat rigid_feats =
        encode_rigid<double>(rigid, ForceDescriptor::from_vector(Vec3(1, 2, 0))).matrix;
    const Mat rest = soft.positions;
    const Mat target = rest + 0.05 * random_mat(rng, 10, 3);

    auto params = init_params<double>(cfg, 9);
    std::vector<Mat> inputs;
    for_each_block(params, [&](const std::string&, const Mat& m) { inputs.push_back(m); });

    auto build = [&](Tape<double>& t, const std::vector<Var<double>>& leaves) {
        ParamVars<double> pv;
        pv.blocks = leaves;
        Var<double> pred =
            forward_on_tape(t, pv, cfg, soft_feats, soft_adj, rigid_feats, rigid_adj, rest);
        // squared error against the target, assembled from suite ops
        Var<double> diff = add(pred, scale(t.constant(target), -1.0));
        Var<double> sq = mean_all(matmul(transpose(diff), diff));
        return sq;
    };
    auto result = grad_check(inputs, build, 1e-5);
    INFO("rel=" << result.max_rel_error << " block=" << result.worst_input
                << " a=" << result.worst_analytic << " fd=" << result.worst_numeric);
    CHECK(result.max_rel_error < 1e-4);
}

TEST_CASE("checkpoint save/load round-trips bitwise") {
    namespace fs = std::filesystem;
    const ModelConfig cfg = tiny_config();
    const auto params = init_params<double>(cfg, 77);
    const std::string path = (fs::temp_directory_path() / "roundtrip.ckpt").string();
    save_checkpoint(path, cfg, params, 64, "only_positional");
    const auto [info, loaded] = load_checkpoint<double>(path);
    CHECK(info.config == cfg);
    CHECK(info.seed == 77);
    CHECK(info.patch_size == 64);
    CHECK(info.ablation == "only_positional");
    CHECK(params_equal(params, loaded));

    const CheckpointInfo peeked = peek_checkpoint(path);
    CHECK(peeked.dtype == "f64");
    CHECK(peeked.config == cfg);

    CHECK_THROWS_AS(load_checkpoint<float>(path), std::runtime_error);  // dtype mismatch
}

TEST_CASE("float checkpoints round-trip too") {
    namespace fs = std::filesystem;
    const ModelConfig cfg = tiny_config();
    const auto params = init_params<float>(cfg, 5);
    const std::string path = (fs::temp_directory_path() / "roundtrip_f32.ckpt").string();
    save_checkpoint(path, cfg, params);
    const auto [info, loaded] = load_checkpoint<float>(path);
    CHECK(info.dtype == "f32");
    CHECK(params_equal(params, loaded));
}
