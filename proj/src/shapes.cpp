#include "deformcast/shapes.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace deformcast {

namespace {

TriMesh from_rows(const std::vector<Vec3>& verts, std::vector<std::array<int, 3>> faces) {
    TriMesh m;
    m.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i)
        m.vertices.row(static_cast<Eigen::Index>(i)) = verts[i];
    m.faces = std::move(faces);
    validate_mesh(m);
    return m;
}

// Lat/long sphere with poles; `radial` maps (direction, base point) to the
// final vertex so ellipsoids and bump patterns reuse the same topology.
template <class RadialFn>
TriMesh latlong_surface(int segments, int rings, RadialFn&& radial) {
    if (segments < 3 || rings < 3) throw std::invalid_argument("sphere needs segments,rings >= 3");
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    verts.push_back(radial(Vec3(0, 1, 0)));  // north pole
    for (int r = 1; r < rings; ++r) {
        const double phi = EIGEN_PI * r / rings;  // from +y
        for (int s = 0; s < segments; ++s) {
            const double theta = 2.0 * EIGEN_PI * s / segments;
            verts.push_back(radial(Vec3(std::sin(phi) * std::cos(theta), std::cos(phi),
                                        std::sin(phi) * std::sin(theta))));
        }
    }
    verts.push_back(radial(Vec3(0, -1, 0)));  // south pole
    const int south = static_cast<int>(verts.size()) - 1;
    auto ring_at = [&](int r, int s) { return 1 + (r - 1) * segments + (s % segments); };
    for (int s = 0; s < segments; ++s) faces.push_back({0, ring_at(1, s + 1), ring_at(1, s)});
    for (int r = 1; r < rings - 1; ++r) {
        for (int s = 0; s < segments; ++s) {
            int a = ring_at(r, s), b = ring_at(r, s + 1);
            int c = ring_at(r + 1, s), d = ring_at(r + 1, s + 1);
            faces.push_back({a, b, d});
            faces.push_back({a, d, c});
        }
    }
    for (int s = 0; s < segments; ++s)
        faces.push_back({south, ring_at(rings - 1, s), ring_at(rings - 1, s + 1)});
    return from_rows(verts, std::move(faces));
}

}  // namespace

TriMesh make_uv_sphere(double radius, int segments, int rings) {
    return latlong_surface(segments, rings, [&](const Vec3& dir) { return radius * dir; });
}

TriMesh make_ellipsoid(const Vec3& radii, int segments, int rings) {
    return latlong_surface(segments, rings,
                           [&](const Vec3& dir) { return dir.cwiseProduct(radii); });
}

TriMesh make_bumpy_sphere(double radius, int segments, int rings) {
    return latlong_surface(segments, rings, [&](const Vec3& dir) {
        const double theta = std::atan2(dir.z(), dir.x());
        const double bump = 1.0 + 0.12 * std::sin(3.0 * theta) * (1.0 - dir.y() * dir.y()) +
                            0.08 * std::cos(2.0 * theta) * dir.y();
        return radius * bump * dir;
    });
}

TriMesh make_box(const Vec3& half, int nx, int ny, int nz) {
    if (nx < 1 || ny < 1 || nz < 1) throw std::invalid_argument("box needs subdivisions >= 1");
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    std::map<std::array<double, 3>, int> weld;  // grid points land on exact doubles

    auto vertex_id = [&](const Vec3& p) {
        std::array<double, 3> key{p.x(), p.y(), p.z()};
        auto [it, inserted] = weld.emplace(key, static_cast<int>(verts.size()));
        if (inserted) verts.push_back(p);
        return it->second;
    };

    // each face: origin corner + two axes, subdivided du x dv
    struct Side {
        Vec3 origin, du, dv;
        int nu, nv;
    };
    const Vec3 x(2 * half.x(), 0, 0), y(0, 2 * half.y(), 0), z(0, 0, 2 * half.z());
    const Vec3 c = -half;
    const std::vector<Side> sides = {
        {c, x, y, nx, ny},                  // z = -hz
        {c + z, y, x, ny, nx},              // z = +hz
        {c, y, z, ny, nz},                  // x = -hx
        {c + x, z, y, nz, ny},              // x = +hx
        {c, z, x, nz, nx},                  // y = -hy
        {c + y, x, z, nx, nz},              // y = +hy
    };
    for (const auto& s : sides) {
        for (int u = 0; u < s.nu; ++u) {
            for (int v = 0; v < s.nv; ++v) {
                auto corner = [&](int uu, int vv) {
                    return vertex_id(s.origin + s.du * (static_cast<double>(uu) / s.nu) +
                                     s.dv * (static_cast<double>(vv) / s.nv));
                };
                int a = corner(u, v), b = corner(u + 1, v);
                int d = corner(u + 1, v + 1), e = corner(u, v + 1);
                faces.push_back({a, b, d});
                faces.push_back({a, d, e});
            }
        }
    }
    return from_rows(verts, std::move(faces));
}

TriMesh make_torus(double major_radius, double minor_radius, int major_segments,
                   int minor_segments) {
    if (major_segments < 3 || minor_segments < 3)
        throw std::invalid_argument("torus needs segments >= 3");
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    for (int i = 0; i < major_segments; ++i) {
        const double u = 2.0 * EIGEN_PI * i / major_segments;
        for (int j = 0; j < minor_segments; ++j) {
            const double v = 2.0 * EIGEN_PI * j / minor_segments;
            const double r = major_radius + minor_radius * std::cos(v);
            verts.emplace_back(r * std::cos(u), minor_radius * std::sin(v), r * std::sin(u));
        }
    }
    auto at = [&](int i, int j) {
        return (i % major_segments) * minor_segments + (j % minor_segments);
    };
    for (int i = 0; i < major_segments; ++i) {
        for (int j = 0; j < minor_segments; ++j) {
            int a = at(i, j), b = at(i + 1, j), c = at(i + 1, j + 1), d = at(i, j + 1);
            faces.push_back({a, b, c});
            faces.push_back({a, c, d});
        }
    }
    return from_rows(verts, std::move(faces));
}

TriMesh make_cylinder(double radius, double height, int radial_segments, int height_segments) {
    if (radial_segments < 3 || height_segments < 1)
        throw std::invalid_argument("cylinder needs radial >= 3, height >= 1");
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    for (int h = 0; h <= height_segments; ++h) {
        const double y = -height / 2 + height * h / height_segments;
        for (int s = 0; s < radial_segments; ++s) {
            const double t = 2.0 * EIGEN_PI * s / radial_segments;
            verts.emplace_back(radius * std::cos(t), y, radius * std::sin(t));
        }
    }
    auto at = [&](int h, int s) { return h * radial_segments + (s % radial_segments); };
    for (int h = 0; h < height_segments; ++h) {
        for (int s = 0; s < radial_segments; ++s) {
            int a = at(h, s), b = at(h, s + 1), c = at(h + 1, s + 1), d = at(h + 1, s);
            faces.push_back({a, b, c});
            faces.push_back({a, c, d});
        }
    }
    const int bottom_center = static_cast<int>(verts.size());
    verts.emplace_back(0, -height / 2, 0);
    const int top_center = static_cast<int>(verts.size());
    verts.emplace_back(0, height / 2, 0);
    for (int s = 0; s < radial_segments; ++s) {
        faces.push_back({bottom_center, at(0, s + 1), at(0, s)});
        faces.push_back({top_center, at(height_segments, s), at(height_segments, s + 1)});
    }
    return from_rows(verts, std::move(faces));
}

TriMesh make_disc(double radius, int rings, int segments) {
    if (rings < 1 || segments < 3) throw std::invalid_argument("disc needs rings >= 1, segs >= 3");
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    verts.emplace_back(0, 0, 0);
    for (int r = 1; r <= rings; ++r) {
        const double rr = radius * r / rings;
        for (int s = 0; s < segments; ++s) {
            const double t = 2.0 * EIGEN_PI * s / segments;
            verts.emplace_back(rr * std::cos(t), 0, rr * std::sin(t));
        }
    }
    auto at = [&](int r, int s) { return 1 + (r - 1) * segments + (s % segments); };
    for (int s = 0; s < segments; ++s) faces.push_back({0, at(1, s), at(1, s + 1)});
    for (int r = 1; r < rings; ++r) {
        for (int s = 0; s < segments; ++s) {
            int a = at(r, s), b = at(r, s + 1), c = at(r + 1, s + 1), d = at(r + 1, s);
            faces.push_back({a, b, c});
            faces.push_back({a, c, d});
        }
    }
    return from_rows(verts, std::move(faces));
}

TriMesh make_icosphere(double radius, int subdivisions) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> verts = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                               {0, -1, t}, {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                               {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
    for (auto& v : verts) v.normalize();
    std::vector<std::array<int, 3>> faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9},  {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6},  {3, 6, 8},
        {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (int iter = 0; iter < subdivisions; ++iter) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto [it, inserted] = midpoint.emplace(key, static_cast<int>(verts.size()));
            if (inserted) verts.push_back(((verts[a] + verts[b]) / 2).normalized());
            return it->second;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            int ab = mid(f[0], f[1]), bc = mid(f[1], f[2]), ca = mid(f[2], f[0]);
            next.push_back({f[0], ab, ca});
            next.push_back({f[1], bc, ab});
            next.push_back({f[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        faces = std::move(next);
    }
    for (auto& v : verts) v *= radius;
    return from_rows(verts, std::move(faces));
}

TriMesh make_cone(double radius, double height, int radial_segments) {
    if (radial_segments < 3) throw std::invalid_argument("cone needs radial segments >= 3");
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    for (int s = 0; s < radial_segments; ++s) {
        const double t = 2.0 * EIGEN_PI * s / radial_segments;
        verts.emplace_back(radius * std::cos(t), -height / 2, radius * std::sin(t));
    }
    const int apex = static_cast<int>(verts.size());
    verts.emplace_back(0, height / 2, 0);
    const int base_center = static_cast<int>(verts.size());
    verts.emplace_back(0, -height / 2, 0);
    for (int s = 0; s < radial_segments; ++s) {
        faces.push_back({apex, s, (s + 1) % radial_segments});
        faces.push_back({base_center, (s + 1) % radial_segments, s});
    }
    return from_rows(verts, std::move(faces));
}

const std::vector<std::string>& builtin_object_names() {
    static const std::vector<std::string> names = {"sphere",   "ellipsoid", "box",  "slab",
                                                   "cylinder", "torus",     "disc", "bump"};
    return names;
}

TriMesh builtin_object(const std::string& name) {
    if (name == "sphere") return make_uv_sphere(0.5, 40, 30);       // 1162 verts
    if (name == "ellipsoid") return make_ellipsoid({0.6, 0.35, 0.45}, 40, 30);
    if (name == "box") return make_box({0.45, 0.3, 0.4}, 16, 12, 14);
    if (name == "slab") return make_box({0.6, 0.12, 0.45}, 22, 5, 17);  // pillow-like proportions
    if (name == "cylinder") return make_cylinder(0.22, 0.9, 36, 30);
    if (name == "torus") return make_torus(0.4, 0.16, 40, 32);      // 1280 verts
    if (name == "disc") return make_disc(0.55, 18, 60);             // 1081 verts, open
    if (name == "bump") return make_bumpy_sphere(0.5, 40, 30);
    throw std::invalid_argument("unknown builtin object: " + name);
}

MaterialDefaults builtin_material(const std::string& name) {
    if (name == "sphere") return {0.9, 0.02};
    if (name == "ellipsoid") return {0.8, 0.03};
    if (name == "box") return {1.0, 0.02};
    if (name == "slab") return {0.6, 0.05};
    if (name == "cylinder") return {0.85, 0.02};
    if (name == "torus") return {0.7, 0.04};
    if (name == "disc") return {0.5, 0.06};
    if (name == "bump") return {0.75, 0.03};
    return {0.8, 0.03};
}

TriMesh make_collider(int shape_index, double scale) {
    switch (((shape_index % 3) + 3) % 3) {
        case 0: return make_icosphere(scale, 1);                       // 42 verts
        case 1: return make_box(Vec3::Constant(scale * 0.8), 3, 3, 3); // 56 verts
        default: return make_cone(scale * 0.9, scale * 1.6, 14);       // 16 verts
    }
}

}  // namespace deformcast
