#pragma once

#include <string>
#include <vector>

#include "deformcast/mesh.hpp"

namespace deformcast {

// Procedural test geometry. Resolutions are chosen so the default objects
// carry 1.1k-1.6k vertices, enough for 1024-vertex patches.

TriMesh make_uv_sphere(double radius, int segments, int rings);
TriMesh make_ellipsoid(const Vec3& radii, int segments, int rings);
TriMesh make_box(const Vec3& half_extents, int nx, int ny, int nz);
TriMesh make_torus(double major_radius, double minor_radius, int major_segments,
                   int minor_segments);
TriMesh make_cylinder(double radius, double height, int radial_segments, int height_segments);
TriMesh make_disc(double radius, int rings, int segments);  // open surface
TriMesh make_icosphere(double radius, int subdivisions);
TriMesh make_cone(double radius, double height, int radial_segments);

/// A sphere with a fixed low-order radial bump pattern; not a sphere of
/// revolution, so its deformations are less symmetric.
TriMesh make_bumpy_sphere(double radius, int segments, int rings);

/// Names of the eight default soft objects.
const std::vector<std::string>& builtin_object_names();

/// Builds one default object by name; throws std::invalid_argument otherwise.
TriMesh builtin_object(const std::string& name);

/// Per-object soft material defaults used by dataset generation.
struct MaterialDefaults {
    double stiffness;
    double damping;
};
MaterialDefaults builtin_material(const std::string& name);

/// Low-poly convex collider: 0 = icosphere, 1 = box, 2 = cone (index mod 3).
TriMesh make_collider(int shape_index, double scale);

}  // namespace deformcast
