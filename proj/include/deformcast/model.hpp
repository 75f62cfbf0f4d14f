#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "deformcast/autodiff.hpp"
#include "deformcast/encoding.hpp"
#include "deformcast/mesh.hpp"
#include "deformcast/types.hpp"

namespace deformcast {

struct ModelConfig {
    int hidden = 256;
    int tag_hops = 3;
    int encoder_layers = 3;
    int decoder_layers = 3;
    int heads = 4;
    int num_frequencies = kNumFrequencies;

    void validate() const {
        if (hidden < 1 || tag_hops < 0 || encoder_layers < 1 || decoder_layers < 1 || heads < 1)
            throw std::invalid_argument("model config: all counts must be >= 1 (tag_hops >= 0)");
        if (hidden % heads != 0)
            throw std::invalid_argument("model config: hidden (" + std::to_string(hidden) +
                                        ") must be divisible by heads (" + std::to_string(heads) +
                                        ")");
        if (num_frequencies != kNumFrequencies)
            throw std::invalid_argument("model config: this build encodes num_frequencies = " +
                                        std::to_string(kNumFrequencies));
    }
    int soft_width() const { return 3 + 6 * num_frequencies; }
    int rigid_width() const { return soft_width() + 4; }
    int head_width() const { return hidden / heads; }

    bool operator==(const ModelConfig&) const = default;
};

template <class Scalar>
struct TagConvLayer {
    std::vector<MatX<Scalar>> hop_weights;  // K+1 blocks, F_in x F_out
    MatX<Scalar> bias;                      // 1 x F_out
};

template <class Scalar>
struct AttentionParams {
    std::vector<MatX<Scalar>> wq, wk, wv;  // per head, hidden x head_width
    MatX<Scalar> wo;                       // hidden x hidden
};

/// All learnable weights. Reconstructible bit-for-bit from (config, seed).
template <class Scalar>
struct ModelParams {
    MatX<Scalar> soft_embed_w, soft_embed_b;
    MatX<Scalar> rigid_embed_w, rigid_embed_b;
    std::vector<TagConvLayer<Scalar>> soft_encoder;
    std::vector<TagConvLayer<Scalar>> rigid_encoder;
    AttentionParams<Scalar> attention;
    std::vector<TagConvLayer<Scalar>> decoder;
    MatX<Scalar> out_w, out_b;
    std::uint64_t seed = 0;
};

/// Visits every weight block in canonical (checkpoint) order.
template <class Scalar, class Fn>
void for_each_block(ModelParams<Scalar>& p, Fn&& fn) {
    fn("soft_embed.w", p.soft_embed_w);
    fn("soft_embed.b", p.soft_embed_b);
    fn("rigid_embed.w", p.rigid_embed_w);
    fn("rigid_embed.b", p.rigid_embed_b);
    auto visit_stack = [&](const char* prefix, std::vector<TagConvLayer<Scalar>>& layers) {
        for (std::size_t l = 0; l < layers.size(); ++l) {
            for (std::size_t k = 0; k < layers[l].hop_weights.size(); ++k)
                fn(std::string(prefix) + "." + std::to_string(l) + ".w" + std::to_string(k),
                   layers[l].hop_weights[k]);
            fn(std::string(prefix) + "." + std::to_string(l) + ".b", layers[l].bias);
        }
    };
    visit_stack("soft_encoder", p.soft_encoder);
    visit_stack("rigid_encoder", p.rigid_encoder);
    for (std::size_t h = 0; h < p.attention.wq.size(); ++h) {
        fn("attention.h" + std::to_string(h) + ".wq", p.attention.wq[h]);
        fn("attention.h" + std::to_string(h) + ".wk", p.attention.wk[h]);
        fn("attention.h" + std::to_string(h) + ".wv", p.attention.wv[h]);
    }
    fn("attention.wo", p.attention.wo);
    visit_stack("decoder", p.decoder);
    fn("out.w", p.out_w);
    fn("out.b", p.out_b);
}

template <class Scalar, class Fn>
void for_each_block(const ModelParams<Scalar>& p, Fn&& fn) {
    for_each_block(const_cast<ModelParams<Scalar>&>(p),
                   [&](const std::string& name, MatX<Scalar>& m) {
                       fn(name, static_cast<const MatX<Scalar>&>(m));
                   });
}

namespace detail {

/// Glorot-uniform fill drawn in double so float and double builds of the
/// same seed hold the same numbers.
template <class Scalar>
void glorot_fill(MatX<Scalar>& m, Eigen::Index fan_in, Eigen::Index fan_out,
                 std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
}

template <class Scalar>
TagConvLayer<Scalar> init_tagconv(int f_in, int f_out, int hops, std::mt19937_64& rng) {
    TagConvLayer<Scalar> layer;
    layer.hop_weights.resize(static_cast<std::size_t>(hops) + 1);
    for (auto& w : layer.hop_weights) {
        w.resize(f_in, f_out);
        glorot_fill(w, f_in, f_out, rng);
    }
    layer.bias = MatX<Scalar>::Zero(1, f_out);
    return layer;
}

}  // namespace detail

template <class Scalar>
ModelParams<Scalar> init_params(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    ModelParams<Scalar> p;
    p.seed = seed;
    const int h = cfg.hidden;

    p.soft_embed_w.resize(cfg.soft_width(), h);
    detail::glorot_fill(p.soft_embed_w, cfg.soft_width(), h, rng);
    p.soft_embed_b = MatX<Scalar>::Zero(1, h);
    p.rigid_embed_w.resize(cfg.rigid_width(), h);
    detail::glorot_fill(p.rigid_embed_w, cfg.rigid_width(), h, rng);
    p.rigid_embed_b = MatX<Scalar>::Zero(1, h);

    for (int l = 0; l < cfg.encoder_layers; ++l)
        p.soft_encoder.push_back(detail::init_tagconv<Scalar>(h, h, cfg.tag_hops, rng));
    for (int l = 0; l < cfg.encoder_layers; ++l)
        p.rigid_encoder.push_back(detail::init_tagconv<Scalar>(h, h, cfg.tag_hops, rng));

    const int dh = cfg.head_width();
    for (int head = 0; head < cfg.heads; ++head) {
        MatX<Scalar> wq(h, dh), wk(h, dh), wv(h, dh);
        detail::glorot_fill(wq, h, dh, rng);
        detail::glorot_fill(wk, h, dh, rng);
        detail::glorot_fill(wv, h, dh, rng);
        p.attention.wq.push_back(std::move(wq));
        p.attention.wk.push_back(std::move(wk));
        p.attention.wv.push_back(std::move(wv));
    }
    p.attention.wo.resize(h, h);
    detail::glorot_fill(p.attention.wo, h, h, rng);

    for (int l = 0; l < cfg.decoder_layers; ++l)
        p.decoder.push_back(detail::init_tagconv<Scalar>(h, h, cfg.tag_hops, rng));

    p.out_w.resize(h, 3);
    detail::glorot_fill(p.out_w, h, 3, rng);
    p.out_b = MatX<Scalar>::Zero(1, 3);
    return p;
}

/// The same parameter tree as tape leaves, for one forward/backward pass.
template <class Scalar>
struct ParamVars {
    std::vector<Var<Scalar>> blocks;  // canonical order, zips with for_each_block
};

template <class Scalar>
ParamVars<Scalar> params_to_tape(Tape<Scalar>& tape, const ModelParams<Scalar>& params,
                                 bool requires_grad) {
    ParamVars<Scalar> vars;
    for_each_block(params, [&](const std::string&, const MatX<Scalar>& m) {
        vars.blocks.push_back(tape.leaf(m, requires_grad));
    });
    return vars;
}

/// Reads gradients off the leaves into a ModelParams-shaped container.
template <class Scalar>
ModelParams<Scalar> collect_gradients(const ModelParams<Scalar>& shape_like,
                                      const ParamVars<Scalar>& vars) {
    ModelParams<Scalar> grads = shape_like;
    std::size_t i = 0;
    for_each_block(grads, [&](const std::string&, MatX<Scalar>& m) {
        m = vars.blocks[i].grad();
        ++i;
    });
    return grads;
}

/// X' = sum_{k=0..K} A^k X W_k + b, by iterated propagation.
template <class Scalar>
Var<Scalar> tagconv_forward(const Var<Scalar>& x, const SparseAdjacency& adj,
                            const std::vector<Var<Scalar>>& hop_weights,
                            const Var<Scalar>& bias) {
    if (hop_weights.empty()) throw std::invalid_argument("tagconv: needs at least one hop weight");
    Var<Scalar> z = x;
    Var<Scalar> acc = matmul(z, hop_weights[0]);
    for (std::size_t k = 1; k < hop_weights.size(); ++k) {
        z = spmm(adj, z);
        acc = add(acc, matmul(z, hop_weights[k]));
    }
    return add_rowvec(acc, bias);
}

/// Multi-head cross-attention with queries from the soft body and keys/values
/// from the rigid body, residual-added onto the soft features.
template <class Scalar>
Var<Scalar> cross_attention(const Var<Scalar>& soft_feats, const Var<Scalar>& rigid_feats,
                            const std::vector<Var<Scalar>>& wq, const std::vector<Var<Scalar>>& wk,
                            const std::vector<Var<Scalar>>& wv, const Var<Scalar>& wo) {
    if (rigid_feats.rows() == 0)
        throw std::invalid_argument("cross_attention: rigid graph is empty");
    if (wq.empty() || wq.size() != wk.size() || wq.size() != wv.size())
        throw std::invalid_argument("cross_attention: inconsistent head weights");
    const Scalar inv_sqrt_d = Scalar(1) / std::sqrt(static_cast<Scalar>(wq[0].cols()));

    Var<Scalar> merged;
    for (std::size_t h = 0; h < wq.size(); ++h) {
        Var<Scalar> q = matmul(soft_feats, wq[h]);
        Var<Scalar> k = matmul(rigid_feats, wk[h]);
        Var<Scalar> v = matmul(rigid_feats, wv[h]);
        Var<Scalar> scores = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_d));
        Var<Scalar> head = matmul(scores, v);
        merged = h == 0 ? head : concat_cols(merged, head);
    }
    return add(soft_feats, matmul(merged, wo));
}

namespace detail {

template <class Scalar>
struct BlockCursor {
    const ParamVars<Scalar>* vars;
    std::size_t next = 0;
    const Var<Scalar>& take() { return vars->blocks[next++]; }
};

template <class Scalar>
Var<Scalar> embed(BlockCursor<Scalar>& cur, const Var<Scalar>& x) {
    const Var<Scalar>& w = cur.take();
    const Var<Scalar>& b = cur.take();
    return relu(add_rowvec(matmul(x, w), b));
}

template <class Scalar>
Var<Scalar> tagconv_stack(BlockCursor<Scalar>& cur, Var<Scalar> h, const SparseAdjacency& adj,
                          int layers, int hops) {
    for (int l = 0; l < layers; ++l) {
        std::vector<Var<Scalar>> ws;
        for (int k = 0; k <= hops; ++k) ws.push_back(cur.take());
        const Var<Scalar>& b = cur.take();
        h = relu(tagconv_forward(h, adj, ws, b));
    }
    return h;
}

}  // namespace detail

/// Full pipeline on an existing tape: embed both bodies, encode with TAGConv
/// stacks, couple via cross-attention, decode, and add the predicted
/// displacement onto the rest positions.
template <class Scalar>
Var<Scalar> forward_on_tape(Tape<Scalar>& tape, const ParamVars<Scalar>& pv,
                            const ModelConfig& cfg, const MatX<Scalar>& soft_feats,
                            const SparseAdjacency& soft_adj, const MatX<Scalar>& rigid_feats,
                            const SparseAdjacency& rigid_adj, const MatX<Scalar>& rest_positions) {
    if (soft_feats.cols() != cfg.soft_width() || rigid_feats.cols() != cfg.rigid_width())
        throw std::invalid_argument("forward: feature widths " +
                                    shape_str(soft_feats.rows(), soft_feats.cols()) + " / " +
                                    shape_str(rigid_feats.rows(), rigid_feats.cols()) +
                                    " do not match the model config");
    if (rest_positions.rows() != soft_feats.rows() || rest_positions.cols() != 3)
        throw std::invalid_argument("forward: rest positions must be N_soft x 3");

    detail::BlockCursor<Scalar> cur{&pv};
    Var<Scalar> soft_in = tape.constant(soft_feats);
    Var<Scalar> rigid_in = tape.constant(rigid_feats);

    Var<Scalar> soft_h = detail::embed(cur, soft_in);
    Var<Scalar> rigid_h = detail::embed(cur, rigid_in);
    soft_h = detail::tagconv_stack(cur, soft_h, soft_adj, cfg.encoder_layers, cfg.tag_hops);
    rigid_h = detail::tagconv_stack(cur, rigid_h, rigid_adj, cfg.encoder_layers, cfg.tag_hops);

    std::vector<Var<Scalar>> wq, wk, wv;
    for (int h = 0; h < cfg.heads; ++h) {
        wq.push_back(cur.take());
        wk.push_back(cur.take());
        wv.push_back(cur.take());
    }
    const Var<Scalar>& wo = cur.take();
    Var<Scalar> conditioned = cross_attention(soft_h, rigid_h, wq, wk, wv, wo);

    Var<Scalar> dec = detail::tagconv_stack(cur, conditioned, soft_adj, cfg.decoder_layers,
                                            cfg.tag_hops);
    const Var<Scalar>& out_w = cur.take();
    const Var<Scalar>& out_b = cur.take();
    Var<Scalar> delta = add_rowvec(matmul(dec, out_w), out_b);
    return add(delta, tape.constant(rest_positions));
}

/// Inference entry point over normalized graphs. The displacement is cast to
/// double and added onto the (double) rest positions, so a zeroed output
/// layer reproduces the rest pose bitwise.
template <class Scalar>
MatX3 forward(const MeshGraph& soft_graph, const MeshGraph& rigid_graph,
              const ForceDescriptor& force, const ModelParams<Scalar>& params,
              const ModelConfig& cfg, AblationMode mode = AblationMode::Both) {
    NodeFeatures<Scalar> soft = ablation_mask(encode_soft<Scalar>(soft_graph), mode);
    NodeFeatures<Scalar> rigid = ablation_mask(encode_rigid<Scalar>(rigid_graph, force), mode);
    SparseAdjacency soft_adj = build_adjacency(soft_graph);
    SparseAdjacency rigid_adj = build_adjacency(rigid_graph);

    Tape<Scalar> tape;
    ParamVars<Scalar> pv = params_to_tape(tape, params, /*requires_grad=*/false);
    MatX<Scalar> rest = soft_graph.positions.cast<Scalar>();
    Var<Scalar> pred = forward_on_tape(tape, pv, cfg, soft.matrix, soft_adj, rigid.matrix,
                                       rigid_adj, rest);
    MatX<Scalar> delta = pred.value() - rest;
    return soft_graph.positions + delta.template cast<double>();
}

// ---- checkpoint container ---------------------------------------------------

template <class Scalar>
const char* dtype_name();
template <>
inline const char* dtype_name<float>() {
    return "f32";
}
template <>
inline const char* dtype_name<double>() {
    return "f64";
}

struct CheckpointInfo {
    ModelConfig config;
    std::uint64_t seed = 0;
    std::string dtype;
    int patch_size = -1;           // -1 = full mesh
    std::string ablation = "both"; // encoding mask the network was trained with
};

/// Reads only the header of a checkpoint file.
CheckpointInfo peek_checkpoint(const std::string& path);

namespace detail {
void write_checkpoint_file(const std::string& path, const CheckpointInfo& info,
                           std::size_t scalar_size,
                           const std::vector<std::pair<std::string, const void*>>& blocks,
                           const std::vector<std::pair<Eigen::Index, Eigen::Index>>& shapes);
void read_checkpoint_file(const std::string& path, const char* want_dtype,
                          std::size_t scalar_size, CheckpointInfo& info,
                          const std::vector<std::pair<std::string, void*>>& blocks,
                          const std::vector<std::pair<Eigen::Index, Eigen::Index>>& shapes);
}  // namespace detail

template <class Scalar>
void save_checkpoint(const std::string& path, const ModelConfig& cfg,
                     const ModelParams<Scalar>& params, int patch_size = -1,
                     const std::string& ablation = "both") {
    CheckpointInfo info;
    info.config = cfg;
    info.seed = params.seed;
    info.dtype = dtype_name<Scalar>();
    info.patch_size = patch_size;
    info.ablation = ablation;
    std::vector<std::pair<std::string, const void*>> blocks;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
    for_each_block(params, [&](const std::string& name, const MatX<Scalar>& m) {
        blocks.emplace_back(name, static_cast<const void*>(m.data()));
        shapes.emplace_back(m.rows(), m.cols());
    });
    detail::write_checkpoint_file(path, info, sizeof(Scalar), blocks, shapes);
}

template <class Scalar>
std::pair<CheckpointInfo, ModelParams<Scalar>> load_checkpoint(const std::string& path) {
    CheckpointInfo info = peek_checkpoint(path);
    info.config.validate();
    ModelParams<Scalar> params = init_params<Scalar>(info.config, info.seed);  // shapes only
    CheckpointInfo reread;
    std::vector<std::pair<std::string, void*>> blocks;
    std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
    for_each_block(params, [&](const std::string& name, MatX<Scalar>& m) {
        blocks.emplace_back(name, static_cast<void*>(m.data()));
        shapes.emplace_back(m.rows(), m.cols());
    });
    detail::read_checkpoint_file(path, dtype_name<Scalar>(), sizeof(Scalar), reread, blocks,
                                 shapes);
    params.seed = reread.seed;
    return {reread, std::move(params)};
}

}  // namespace deformcast
