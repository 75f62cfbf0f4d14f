#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "deformcast/mesh.hpp"
#include "deformcast/shapes.hpp"

using namespace deformcast;
namespace fs = std::filesystem;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const fs::path path = fs::temp_directory_path() / name;
    std::ofstream out(path);
    out << content;
    return path.string();
}

const char* kCubeObj = R"(# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
)";

// brute-force edge oracle: hash set over canonicalized face edges
std::set<std::pair<int, int>> edge_oracle(const TriMesh& mesh) {
    std::set<std::pair<int, int>> edges;
    for (const auto& f : mesh.faces) {
        for (int e = 0; e < 3; ++e) {
            int a = f[e], b = f[(e + 1) % 3];
            edges.emplace(std::min(a, b), std::max(a, b));
        }
    }
    return edges;
}

TriMesh random_mesh(std::mt19937_64& rng, int max_faces) {
    std::uniform_int_distribution<int> nverts(3, 60), nfaces(1, max_faces);
    std::uniform_real_distribution<double> coord(-2.0, 2.0);
    TriMesh mesh;
    const int n = nverts(rng);
    mesh.vertices.resize(n, 3);
    for (int i = 0; i < n; ++i)
        mesh.vertices.row(i) << coord(rng), coord(rng), coord(rng);
    std::uniform_int_distribution<int> vid(0, n - 1);
    const int f = nfaces(rng);
    while (static_cast<int>(mesh.faces.size()) < f) {
        int a = vid(rng), b = vid(rng), c = vid(rng);
        if (a == b || b == c || a == c) continue;
        mesh.faces.push_back({a, b, c});
    }
    return mesh;
}

}  // namespace

TEST_CASE("load_mesh parses the OBJ cube") {
    const TriMesh mesh = load_mesh(write_temp("cube.obj", kCubeObj));
    CHECK(mesh.vertex_count() == 8);
    CHECK(mesh.face_count() == 12);
}

TEST_CASE("load_mesh fan-triangulates quads") {
    const std::string obj = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
    const TriMesh mesh = load_mesh(write_temp("quad.obj", obj));
    REQUIRE(mesh.face_count() == 2);
    CHECK(mesh.faces[0] == std::array<int, 3>{0, 1, 2});
    CHECK(mesh.faces[1] == std::array<int, 3>{0, 2, 3});
}

TEST_CASE("load_mesh rejects degenerate faces with the face index") {
    const std::string obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 1 2\n";
    CHECK_THROWS_WITH_AS(load_mesh(write_temp("degen.obj", obj)),
                         doctest::Contains("degenerate face 0"), ParseError);
}

TEST_CASE("load_mesh reports parse errors with line numbers") {
    const std::string obj = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n";
    try {
        load_mesh(write_temp("badidx.obj", obj));
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line() == 4);
        CHECK(std::string(e.what()).find("out of range") != std::string::npos);
    }
}

TEST_CASE("load_mesh missing file") {
    CHECK_THROWS_AS(load_mesh("/nonexistent/nothing.obj"), std::runtime_error);
}

TEST_CASE("load_mesh parses OFF") {
    const std::string off = "OFF\n4 2 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n";
    const TriMesh mesh = load_mesh(write_temp("pair.off", off));
    CHECK(mesh.vertex_count() == 4);
    CHECK(mesh.face_count() == 2);
}

TEST_CASE("save then load round-trips coordinates bitwise") {
    TriMesh mesh = make_uv_sphere(0.37, 8, 6);
    const std::string path = (fs::temp_directory_path() / "roundtrip.obj").string();
    save_mesh_obj(mesh, path);
    const TriMesh back = load_mesh(path);
    REQUIRE(back.vertex_count() == mesh.vertex_count());
    CHECK((back.vertices - mesh.vertices).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.faces == mesh.faces);
}

TEST_CASE("build_graph on the cube gives 18 unique edges") {
    const TriMesh mesh = load_mesh(write_temp("cube2.obj", kCubeObj));
    const MeshGraph graph = build_graph(mesh);
    CHECK(graph.edge_count() == 18);
    CHECK(graph.node_count() == 8);
    CHECK(graph.source_face_count == 12);
}

TEST_CASE("build_graph single triangle") {
    TriMesh mesh;
    mesh.vertices.resize(3, 3);
    mesh.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0;
    mesh.faces = {{0, 1, 2}};
    CHECK(build_graph(mesh).edge_count() == 3);
}

TEST_CASE("build_graph two triangles sharing an edge") {
    TriMesh mesh;
    mesh.vertices.resize(4, 3);
    mesh.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0;
    mesh.faces = {{0, 1, 2}, {1, 3, 2}};
    CHECK(build_graph(mesh).edge_count() == 5);
}

TEST_CASE("build_graph matches the brute-force oracle on random meshes") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 30; ++trial) {
        const TriMesh mesh = random_mesh(rng, 500);
        const MeshGraph graph = build_graph(mesh);
        const auto oracle = edge_oracle(mesh);
        REQUIRE(graph.edges.size() == oracle.size());
        std::set<std::pair<int, int>> got(graph.edges.begin(), graph.edges.end());
        CHECK(got == oracle);
        CHECK(graph.edge_count() <= 3 * mesh.face_count());
    }
}

TEST_CASE("extract_patch with k = N is a relabeling identity") {
    const MeshGraph graph = build_graph(make_uv_sphere(1.0, 10, 8));
    const auto [patch, map] = extract_patch(graph, Vec3(3, 1, 0), static_cast<int>(graph.node_count()));
    REQUIRE(patch.node_count() == graph.node_count());
    std::set<std::pair<int, int>> original(graph.edges.begin(), graph.edges.end());
    std::set<std::pair<int, int>> remapped;
    for (const auto& [a, b] : patch.edges) {
        int oa = map[a], ob = map[b];
        remapped.emplace(std::min(oa, ob), std::max(oa, ob));
    }
    CHECK(remapped == original);
    for (Eigen::Index i = 0; i < patch.node_count(); ++i)
        CHECK(patch.positions.row(i) == graph.positions.row(map[i]));
}

TEST_CASE("extract_patch picks nearest vertices on a line graph") {
    MeshGraph graph;
    graph.positions.resize(4, 3);
    graph.positions << 0, 0, 0, 1, 0, 0, 2, 0, 0, 3, 0, 0;
    graph.edges = {{0, 1}, {1, 2}, {2, 3}};
    const auto [patch, map] = extract_patch(graph, Vec3(0, 0, 0), 2);
    CHECK(map == std::vector<int>{0, 1});
    REQUIRE(patch.edges.size() == 1);
    CHECK(patch.edges[0] == std::pair<int, int>(0, 1));
}

TEST_CASE("extract_patch k=1024 on a larger mesh") {
    const MeshGraph graph = build_graph(builtin_object("sphere"));
    REQUIRE(graph.node_count() >= 1024);
    const auto [patch, map] = extract_patch(graph, Vec3(0, 0.5, 0), 1024);
    CHECK(patch.node_count() == 1024);
    CHECK(map.size() == 1024);
}

TEST_CASE("extract_patch rejects k outside range") {
    MeshGraph graph;
    graph.positions = MatX3::Zero(3, 3);
    graph.positions << 0, 0, 0, 1, 0, 0, 2, 0, 0;
    CHECK_THROWS_AS(extract_patch(graph, Vec3::Zero(), 4), std::invalid_argument);
    CHECK_THROWS_AS(extract_patch(graph, Vec3::Zero(), 0), std::invalid_argument);
}

TEST_CASE("normalize_pair is the identity on a centered unit-diagonal graph") {
    MeshGraph soft;
    soft.positions.resize(2, 3);
    const double h = 0.5 / std::sqrt(3.0);
    soft.positions << -h, -h, -h, h, h, h;  // bbox diagonal length 1, centroid 0
    soft.edges = {{0, 1}};
    MeshGraph rigid = soft;
    const NormalizedPair norm = normalize_pair(soft, rigid);
    CHECK(norm.transform.center.norm() == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(norm.transform.scale == doctest::Approx(1.0));
    CHECK((norm.soft.positions - soft.positions).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("normalize_pair centers and scales the [0,2]^3 cube") {
    MeshGraph soft = build_graph(make_box(Vec3(1, 1, 1), 1, 1, 1));
    soft.positions.array() += 1.0;  // occupy [0,2]^3
    MeshGraph rigid;
    rigid.positions = MatX3::Zero(1, 3);
    const NormalizedPair norm = normalize_pair(soft, rigid);
    CHECK((norm.transform.center - Vec3(1, 1, 1)).norm() < 1e-12);
    CHECK(norm.transform.scale == doctest::Approx(2.0 * std::sqrt(3.0)));
    // rigid transformed with the same soft-anchored transform
    CHECK((norm.rigid.positions.row(0).transpose() + Vec3(1, 1, 1) / (2.0 * std::sqrt(3.0))).norm() <
          1e-12);
}

TEST_CASE("normalize_pair rejects coincident soft vertices") {
    MeshGraph soft;
    soft.positions = MatX3::Zero(4, 3);
    MeshGraph rigid;
    rigid.positions = MatX3::Zero(1, 3);
    CHECK_THROWS_WITH_AS(normalize_pair(soft, rigid), doctest::Contains("degenerate"),
                         std::invalid_argument);
}

TEST_CASE("normalize then invert recovers positions") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const TriMesh mesh = random_mesh(rng, 40);
        MeshGraph soft = build_graph(mesh);
        MeshGraph rigid = soft;
        try {
            const NormalizedPair norm = normalize_pair(soft, rigid);
            const MatX3 back = norm.transform.invert(norm.soft.positions);
            CHECK((back - soft.positions).cwiseAbs().maxCoeff() < 1e-9 * norm.transform.scale);
        } catch (const std::invalid_argument&) {
            // degenerate random mesh; skip
        }
    }
}

TEST_CASE("validate_mesh rejects bad indices") {
    TriMesh mesh;
    mesh.vertices = MatX3::Zero(3, 3);
    mesh.vertices << 0, 0, 0, 1, 0, 0, 0, 1, 0;
    mesh.faces = {{0, 1, 3}};
    CHECK_THROWS_AS(validate_mesh(mesh), std::invalid_argument);
    mesh.faces = {{0, 1, 1}};
    CHECK_THROWS_AS(validate_mesh(mesh), std::invalid_argument);
    mesh.faces.clear();
    CHECK_THROWS_AS(validate_mesh(mesh), std::invalid_argument);
}
