#pragma once

#include <array>
#include <string>
#include <utility>
#include <vector>

#include "deformcast/types.hpp"

namespace deformcast {

/// Triangle surface mesh. Faces are 0-based vertex index triples.
struct TriMesh {
    MatX3 vertices;                            // N x 3
    std::vector<std::array<int, 3>> faces;     // F triples, each index < N

    Eigen::Index vertex_count() const { return vertices.rows(); }
    Eigen::Index face_count() const { return static_cast<Eigen::Index>(faces.size()); }
};

/// Graph view of a mesh: node positions plus deduplicated undirected edges,
/// each stored min-index first.
struct MeshGraph {
    MatX3 positions;                           // N x 3
    std::vector<std::pair<int, int>> edges;    // unique, first < second
    int source_face_count = 0;

    Eigen::Index node_count() const { return positions.rows(); }
    Eigen::Index edge_count() const { return static_cast<Eigen::Index>(edges.size()); }
};

/// p' = (p - center) / scale, invertible.
struct NormalizationTransform {
    Vec3 center = Vec3::Zero();
    double scale = 1.0;

    Vec3 apply(const Vec3& p) const { return (p - center) / scale; }
    Vec3 invert(const Vec3& p) const { return p * scale + center; }
    MatX3 apply(const MatX3& p) const { return (p.rowwise() - center.transpose()) / scale; }
    MatX3 invert(const MatX3& p) const { return (p * scale).rowwise() + center.transpose(); }
};

/// Throws std::invalid_argument if the mesh breaks a TriMesh invariant
/// (counts, index range, repeated index within a face).
void validate_mesh(const TriMesh& mesh);

/// Reads an OBJ (v/f records, 1-based indices, '#' comments, other records
/// ignored) or OFF file, chosen by extension with an OFF-header fallback.
/// Polygon faces are fan-triangulated.
TriMesh load_mesh(const std::string& path);

/// Writes the OBJ subset emitted by the toolkit. Coordinates use 17
/// significant digits so written doubles reload bitwise.
void save_mesh_obj(const TriMesh& mesh, const std::string& path);

/// Every face (a,b,c) contributes edges {a,b},{b,c},{c,a}; duplicates removed.
MeshGraph build_graph(const TriMesh& mesh);

/// Selects the k nodes nearest to `anchor` (ties broken by lower index) and
/// returns the induced subgraph plus the patch-to-original index map.
std::pair<MeshGraph, std::vector<int>> extract_patch(const MeshGraph& graph, const Vec3& anchor,
                                                     int k);

/// Centers on the soft centroid and scales by the soft bounding-box diagonal;
/// the rigid graph gets the same transform so relative placement survives.
struct NormalizedPair {
    MeshGraph soft;
    MeshGraph rigid;
    NormalizationTransform transform;
};
NormalizedPair normalize_pair(const MeshGraph& soft, const MeshGraph& rigid);

}  // namespace deformcast
