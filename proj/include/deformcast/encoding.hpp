#pragma once

#include <cmath>
#include <stdexcept>

#include "deformcast/mesh.hpp"
#include "deformcast/types.hpp"

namespace deformcast {

inline constexpr int kNumFrequencies = 3;
inline constexpr int kSoftFeatureWidth = 3 + 6 * kNumFrequencies;   // 21
inline constexpr int kRigidFeatureWidth = kSoftFeatureWidth + 4;    // 25

/// Unit direction plus magnitude; (0,0,0) direction only when magnitude is 0.
struct ForceDescriptor {
    Vec3 direction = Vec3::Zero();
    double magnitude = 0.0;

    void validate() const {
        if (!(magnitude >= 0.0)) throw std::invalid_argument("force magnitude must be >= 0");
        if (magnitude == 0.0) {
            if (direction.norm() > 1e-6)
                throw std::invalid_argument("zero-magnitude force must carry a zero direction");
        } else if (std::abs(direction.norm() - 1.0) > 1e-6) {
            throw std::invalid_argument("force direction must be unit length");
        }
    }

    static ForceDescriptor from_vector(const Vec3& force) {
        ForceDescriptor d;
        d.magnitude = force.norm();
        if (d.magnitude > 0.0) d.direction = force / d.magnitude;
        return d;
    }
};

enum class BodyKind { Soft, Rigid };
enum class AblationMode { Both, PositionalOnly, PhysicsOnly };

/// Per-node encoded feature rows; width fixed by kind (21 soft, 25 rigid).
template <class Scalar>
struct NodeFeatures {
    MatX<Scalar> matrix;
    BodyKind kind = BodyKind::Soft;

    NodeFeatures() = default;
    NodeFeatures(MatX<Scalar> m, BodyKind k) : matrix(std::move(m)), kind(k) {
        const int want = k == BodyKind::Soft ? kSoftFeatureWidth : kRigidFeatureWidth;
        if (matrix.cols() != want)
            throw std::invalid_argument("feature width " + std::to_string(matrix.cols()) +
                                        " does not match contract width " + std::to_string(want));
        if (!matrix.allFinite()) throw std::invalid_argument("node features must be finite");
    }
};

/// Row for position p:
///   [ p, sin(2^k pi p_c), cos(2^k pi p_c) ]  for c in {x,y,z}, k in 0..num_frequencies-1,
/// coordinate-major, frequency inner, sin before cos.
template <class Scalar>
MatX<Scalar> logfreq_encode(const MatX3T<Scalar>& positions, int num_frequencies) {
    if (num_frequencies < 0) throw std::invalid_argument("num_frequencies must be >= 0");
    if (!positions.allFinite()) throw std::invalid_argument("logfreq_encode: non-finite positions");
    const Eigen::Index n = positions.rows();
    MatX<Scalar> out(n, 3 + 6 * num_frequencies);
    out.leftCols(3) = positions;
    const Scalar pi = static_cast<Scalar>(EIGEN_PI);
    for (int c = 0; c < 3; ++c) {
        for (int k = 0; k < num_frequencies; ++k) {
            const Scalar freq = static_cast<Scalar>(1 << k) * pi;
            const Eigen::Index col = 3 + c * 2 * num_frequencies + 2 * k;
            out.col(col) = (positions.col(c) * freq).array().sin();
            out.col(col + 1) = (positions.col(c) * freq).array().cos();
        }
    }
    return out;
}

template <class Scalar>
NodeFeatures<Scalar> encode_soft(const MeshGraph& graph) {
    MatX3T<Scalar> pos = graph.positions.cast<Scalar>();
    return NodeFeatures<Scalar>(logfreq_encode<Scalar>(pos, kNumFrequencies), BodyKind::Soft);
}

template <class Scalar>
NodeFeatures<Scalar> encode_rigid(const MeshGraph& graph, const ForceDescriptor& force) {
    force.validate();
    MatX3T<Scalar> pos = graph.positions.cast<Scalar>();
    MatX<Scalar> enc = logfreq_encode<Scalar>(pos, kNumFrequencies);
    MatX<Scalar> out(enc.rows(), kRigidFeatureWidth);
    out.leftCols(kSoftFeatureWidth) = enc;
    // one impact force per scenario, broadcast to every rigid node
    for (int c = 0; c < 3; ++c)
        out.col(kSoftFeatureWidth + c).setConstant(static_cast<Scalar>(force.direction[c]));
    out.col(kSoftFeatureWidth + 3).setConstant(static_cast<Scalar>(force.magnitude));
    return NodeFeatures<Scalar>(std::move(out), BodyKind::Rigid);
}

/// PositionalOnly zeroes force columns; PhysicsOnly zeroes the sin/cos
/// columns (raw xyz kept so geometry stays locatable); Both is the identity.
template <class Scalar>
NodeFeatures<Scalar> ablation_mask(const NodeFeatures<Scalar>& features, AblationMode mode) {
    NodeFeatures<Scalar> out = features;
    switch (mode) {
        case AblationMode::Both:
            break;
        case AblationMode::PositionalOnly:
            if (out.kind == BodyKind::Rigid) out.matrix.rightCols(4).setZero();
            break;
        case AblationMode::PhysicsOnly:
            out.matrix.middleCols(3, 6 * kNumFrequencies).setZero();
            break;
    }
    return out;
}

inline AblationMode parse_ablation_mode(const std::string& name) {
    if (name == "both") return AblationMode::Both;
    if (name == "positional_only" || name == "only_positional") return AblationMode::PositionalOnly;
    if (name == "physics_only" || name == "only_physics") return AblationMode::PhysicsOnly;
    throw std::invalid_argument("unknown ablation mode: " + name);
}

inline const char* ablation_mode_name(AblationMode mode) {
    switch (mode) {
        case AblationMode::Both: return "both";
        case AblationMode::PositionalOnly: return "only_positional";
        case AblationMode::PhysicsOnly: return "only_physics";
    }
    return "?";
}

}  // namespace deformcast
