#include "deformcast/mesh.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace deformcast {

void validate_mesh(const TriMesh& mesh) {
    const Eigen::Index n = mesh.vertex_count();
    if (n < 3) throw std::invalid_argument("mesh needs at least 3 vertices, got " + std::to_string(n));
    if (mesh.faces.empty()) throw std::invalid_argument("mesh needs at least 1 face");
    for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
        const auto& face = mesh.faces[f];
        for (int idx : face) {
            if (idx < 0 || idx >= n)
                throw std::invalid_argument("face " + std::to_string(f) + " references vertex " +
                                            std::to_string(idx) + " outside [0, " + std::to_string(n) + ")");
        }
        if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2])
            throw std::invalid_argument("degenerate face " + std::to_string(f) +
                                        ": repeated vertex index");
    }
}

namespace {

bool is_blank(const std::string& s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

// Fan-triangulates a polygon's 0-based loop into `faces`.
void emit_fan(const std::vector<int>& loop, std::vector<std::array<int, 3>>& faces) {
    for (std::size_t k = 1; k + 1 < loop.size(); ++k)
        faces.push_back({loop[0], loop[static_cast<int>(k)], loop[static_cast<int>(k) + 1]});
}

TriMesh parse_obj(std::istream& in, const std::string& path) {
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (is_blank(line)) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x() >> p.y() >> p.z()))
                throw ParseError(path + ": malformed vertex record", lineno);
            verts.push_back(p);
        } else if (tag == "f") {
            std::vector<int> loop;
            std::string tok;
            while (ls >> tok) {
                // accept "i", "i/t", "i/t/n", "i//n"; only the vertex index matters
                const std::string head = tok.substr(0, tok.find('/'));
                int idx = 0;
                try {
                    idx = std::stoi(head);
                } catch (const std::exception&) {
                    throw ParseError(path + ": bad face index '" + tok + "'", lineno);
                }
                if (idx < 1 || idx > static_cast<int>(verts.size()))
                    throw ParseError(path + ": face index " + std::to_string(idx) +
                                         " out of range [1, " + std::to_string(verts.size()) + "]",
                                     lineno);
                loop.push_back(idx - 1);
            }
            if (loop.size() < 3) throw ParseError(path + ": face with fewer than 3 vertices", lineno);
            const std::size_t face_index = [&] {
                std::size_t before = faces.size();
                emit_fan(loop, faces);
                return before;
            }();
            for (std::size_t f = face_index; f < faces.size(); ++f) {
                const auto& t = faces[f];
                if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2])
                    throw ParseError(path + ": degenerate face " + std::to_string(f) +
                                         " (repeated vertex index)",
                                     lineno);
            }
        }
        // all other record types ignored
    }
    TriMesh mesh;
    mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i];
    mesh.faces = std::move(faces);
    validate_mesh(mesh);
    return mesh;
}

TriMesh parse_off(std::istream& in, const std::string& path) {
    std::string line;
    int lineno = 0;
    auto next_content_line = [&]() -> std::string {
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            if (!is_blank(line)) return line;
        }
        throw ParseError(path + ": unexpected end of OFF file", lineno);
    };

    std::istringstream hdr(next_content_line());
    std::string magic;
    hdr >> magic;
    if (magic != "OFF") throw ParseError(path + ": missing OFF header", lineno);

    std::size_t nv = 0, nf = 0, ne = 0;
    std::istringstream counts(next_content_line());
    if (!(counts >> nv >> nf >> ne)) throw ParseError(path + ": malformed OFF counts line", lineno);

    TriMesh mesh;
    mesh.vertices.resize(static_cast<Eigen::Index>(nv), 3);
    for (std::size_t i = 0; i < nv; ++i) {
        std::istringstream vs(next_content_line());
        double x, y, z;
        if (!(vs >> x >> y >> z)) throw ParseError(path + ": malformed OFF vertex", lineno);
        mesh.vertices.row(static_cast<Eigen::Index>(i)) << x, y, z;
    }
    for (std::size_t f = 0; f < nf; ++f) {
        std::istringstream fs(next_content_line());
        int count = 0;
        if (!(fs >> count) || count < 3) throw ParseError(path + ": malformed OFF face", lineno);
        std::vector<int> loop(count);
        for (int& idx : loop) {
            if (!(fs >> idx)) throw ParseError(path + ": truncated OFF face", lineno);
            if (idx < 0 || idx >= static_cast<int>(nv))
                throw ParseError(path + ": OFF face index " + std::to_string(idx) + " out of range",
                                 lineno);
        }
        emit_fan(loop, mesh.faces);
    }
    validate_mesh(mesh);
    return mesh;
}

bool has_suffix(const std::string& s, const std::string& suffix) {
    if (s.size() < suffix.size()) return false;
    std::string tail = s.substr(s.size() - suffix.size());
    std::transform(tail.begin(), tail.end(), tail.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return tail == suffix;
}

}  // namespace

TriMesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mesh file: " + path);
    if (has_suffix(path, ".off")) return parse_off(in, path);
    if (has_suffix(path, ".obj")) return parse_obj(in, path);
    // unknown extension: sniff the OFF magic, else treat as OBJ
    std::string first;
    std::getline(in, first);
    in.seekg(0);
    if (first.rfind("OFF", 0) == 0) return parse_off(in, path);
    return parse_obj(in, path);
}

void save_mesh_obj(const TriMesh& mesh, const std::string& path) {
    validate_mesh(mesh);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write mesh file: " + path);
    char buf[96];
    for (Eigen::Index i = 0; i < mesh.vertex_count(); ++i) {
        std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", mesh.vertices(i, 0),
                      mesh.vertices(i, 1), mesh.vertices(i, 2));
        out << buf;
    }
    for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

MeshGraph build_graph(const TriMesh& mesh) {
    validate_mesh(mesh);
    MeshGraph graph;
    graph.positions = mesh.vertices;
    graph.source_face_count = static_cast<int>(mesh.face_count());
    std::set<std::pair<int, int>> seen;
    for (const auto& f : mesh.faces) {
        for (int e = 0; e < 3; ++e) {
            int a = f[e], b = f[(e + 1) % 3];
            if (a > b) std::swap(a, b);
            seen.emplace(a, b);
        }
    }
    graph.edges.assign(seen.begin(), seen.end());
    return graph;
}

std::pair<MeshGraph, std::vector<int>> extract_patch(const MeshGraph& graph, const Vec3& anchor,
                                                     int k) {
    const Eigen::Index n = graph.node_count();
    if (!anchor.allFinite()) throw std::invalid_argument("extract_patch: anchor must be finite");
    if (k < 1 || k > n)
        throw std::invalid_argument("extract_patch: k = " + std::to_string(k) +
                                    " outside [1, " + std::to_string(n) + "]");

    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    VecX<double> dist2 = (graph.positions.rowwise() - anchor.transpose()).rowwise().squaredNorm();
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (dist2[a] != dist2[b]) return dist2[a] < dist2[b];
        return a < b;
    });
    std::vector<int> selected(order.begin(), order.begin() + k);
    std::sort(selected.begin(), selected.end());  // patch keeps original relative order

    std::vector<int> to_patch(static_cast<std::size_t>(n), -1);
    for (int p = 0; p < k; ++p) to_patch[static_cast<std::size_t>(selected[p])] = p;

    MeshGraph patch;
    patch.positions.resize(k, 3);
    for (int p = 0; p < k; ++p) patch.positions.row(p) = graph.positions.row(selected[p]);
    patch.source_face_count = graph.source_face_count;
    for (const auto& [a, b] : graph.edges) {
        int pa = to_patch[static_cast<std::size_t>(a)], pb = to_patch[static_cast<std::size_t>(b)];
        if (pa >= 0 && pb >= 0) patch.edges.emplace_back(std::min(pa, pb), std::max(pa, pb));
    }
    std::sort(patch.edges.begin(), patch.edges.end());
    return {std::move(patch), std::move(selected)};
}

NormalizedPair normalize_pair(const MeshGraph& soft, const MeshGraph& rigid) {
    if (soft.node_count() == 0 || rigid.node_count() == 0)
        throw std::invalid_argument("normalize_pair: both graphs must be non-empty");
    NormalizationTransform t;
    t.center = soft.positions.colwise().mean().transpose();
    const Vec3 lo = soft.positions.colwise().minCoeff().transpose();
    const Vec3 hi = soft.positions.colwise().maxCoeff().transpose();
    t.scale = (hi - lo).norm();
    if (t.scale <= 0.0)
        throw std::invalid_argument("normalize_pair: degenerate geometry, all soft vertices coincide");

    NormalizedPair out;
    out.soft = soft;
    out.rigid = rigid;
    out.soft.positions = t.apply(soft.positions);
    out.rigid.positions = t.apply(rigid.positions);
    out.transform = t;
    return out;
}

}  // namespace deformcast
