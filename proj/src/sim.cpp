#include "deformcast/sim.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <limits>
#include <mutex>
#include <random>
#include <thread>

#include "deformcast/dataset.hpp"
#include "deformcast/shapes.hpp"

namespace deformcast {

namespace {

// shared by constraint setup and projection so a rest-pose edge measures a
// length that is bit-identical to its stored rest length
inline double edge_length(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

}  // namespace

DistanceCorrection project_distance_constraint(const Vec3& p1, const Vec3& p2, double w1,
                                               double w2, double rest_length, double stiffness) {
    if (w1 + w2 <= 0.0)
        throw std::invalid_argument("distance constraint between two pinned particles");
    DistanceCorrection out;
    const Vec3 d = p1 - p2;
    const double len = edge_length(p1, p2);
    if (len <= 0.0) {
        out.skipped = true;
        return out;
    }
    const double c = len - rest_length;
    if (c == 0.0) return out;  // exactly satisfied, leave positions untouched
    const Vec3 n = d / len;
    out.dp1 = -stiffness * (w1 / (w1 + w2)) * c * n;
    out.dp2 = stiffness * (w2 / (w2 + w1)) * c * n;
    return out;
}

namespace {

// World-frame convex collider with outward face planes; orientation is fixed
// by pointing normals away from the vertex centroid, so the generator's
// winding does not matter.
struct ColliderFrame {
    MatX3 verts;
    std::vector<Vec3> normals;
    std::vector<double> offsets;  // plane: n . x = offset
    Vec3 center = Vec3::Zero();
    double bounding_radius = 0.0;
    double contact_eps = 0.0;
};

ColliderFrame build_frame(const RigidCollider& collider) {
    ColliderFrame f;
    f.verts = collider.world_vertices();
    f.center = f.verts.colwise().mean().transpose();
    f.bounding_radius = (f.verts.rowwise() - f.center.transpose()).rowwise().norm().maxCoeff();
    f.contact_eps = 1e-9 * (1.0 + f.bounding_radius);
    f.normals.reserve(collider.mesh.faces.size());
    f.offsets.reserve(collider.mesh.faces.size());
    for (const auto& face : collider.mesh.faces) {
        const Vec3 a = f.verts.row(face[0]).transpose();
        const Vec3 b = f.verts.row(face[1]).transpose();
        const Vec3 c = f.verts.row(face[2]).transpose();
        Vec3 n = (b - a).cross(c - a);
        const double norm = n.norm();
        if (norm < 1e-14) continue;  // degenerate face contributes no plane
        n /= norm;
        if (n.dot(f.center - a) > 0.0) n = -n;
        f.normals.push_back(n);
        f.offsets.push_back(n.dot(a));
    }
    return f;
}

// Signed distance of p to the nearest face plane from inside; positive means
// outside the hull. Returns the plane index through `which`.
double hull_distance(const ColliderFrame& f, const Vec3& p, int& which) {
    double best = -std::numeric_limits<double>::infinity();
    which = -1;
    for (std::size_t i = 0; i < f.normals.size(); ++i) {
        const double d = f.normals[i].dot(p) - f.offsets[i];
        if (d > best) {
            best = d;
            which = static_cast<int>(i);
        }
    }
    return best;
}

// Projects p out of the hull and above the ground; returns whether p moved.
bool project_out(const ColliderFrame& f, double ground_height, Vec3& p) {
    bool moved = false;
    const double reach2 =
        (f.bounding_radius + f.contact_eps) * (f.bounding_radius + f.contact_eps);
    if ((p - f.center).squaredNorm() <= reach2) {
        int which = -1;
        const double d = hull_distance(f, p, which);
        if (which >= 0 && d < 0.0) {
            p -= d * f.normals[static_cast<std::size_t>(which)];
            moved = true;
        }
    }
    if (p.y() < ground_height) {
        p.y() = ground_height;
        moved = true;
    }
    return moved;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

Vec3 unit_vector(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> uz(-1.0, 1.0), ut(0.0, 2.0 * EIGEN_PI);
    const double z = uz(rng);
    const double t = ut(rng);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(t), z, r * std::sin(t)};
}

Vec3 in_ball(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    Vec3 dir = unit_vector(rng);
    return dir * std::cbrt(u01(rng));
}

Mat3 random_rotation(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ua(0.0, 2.0 * EIGEN_PI);
    const Vec3 axis = unit_vector(rng);
    return Eigen::AngleAxisd(ua(rng), axis).toRotationMatrix();
}

// Moeller-Trumbore over all faces; returns the nearest positive hit distance
// or a negative value when the ray misses the mesh.
double ray_mesh_distance(const Vec3& origin, const Vec3& dir, const TriMesh& mesh) {
    double best = -1.0;
    for (const auto& f : mesh.faces) {
        const Vec3 a = mesh.vertices.row(f[0]).transpose();
        const Vec3 e1 = mesh.vertices.row(f[1]).transpose() - a;
        const Vec3 e2 = mesh.vertices.row(f[2]).transpose() - a;
        const Vec3 p = dir.cross(e2);
        const double det = e1.dot(p);
        if (std::abs(det) < 1e-14) continue;
        const double inv = 1.0 / det;
        const Vec3 s = origin - a;
        const double u = s.dot(p) * inv;
        if (u < 0.0 || u > 1.0) continue;
        const Vec3 q = s.cross(e1);
        const double v = dir.dot(q) * inv;
        if (v < 0.0 || u + v > 1.0) continue;
        const double t = e2.dot(q) * inv;
        if (t > 0.0 && (best < 0.0 || t < best)) best = t;
    }
    return best;
}

}  // namespace

std::vector<ContactEvent> resolve_collisions(SoftBodyState& state, const RigidCollider& collider,
                                             double ground_height) {
    const ColliderFrame frame = build_frame(collider);
    const double reach2 =
        (frame.bounding_radius + frame.contact_eps) * (frame.bounding_radius + frame.contact_eps);
    const double ground_eps = 1e-9 * (1.0 + std::abs(ground_height));

    std::vector<ContactEvent> contacts;
    for (Eigen::Index i = 0; i < state.particles.rows(); ++i) {
        Vec3 p = state.particles.row(i).transpose();
        const bool movable = state.inverse_masses[i] > 0.0;
        bool contacted = false;
        Vec3 point = Vec3::Zero();
        Vec3 normal = Vec3::UnitY();

        if ((p - frame.center).squaredNorm() <= reach2) {
            int which = -1;
            const double d = hull_distance(frame, p, which);
            if (which >= 0 && d <= frame.contact_eps) {
                const Vec3 n = frame.normals[static_cast<std::size_t>(which)];
                const Vec3 surface = p - d * n;
                if (d < 0.0 && movable) p = surface;
                contacted = true;
                point = surface;
                normal = n;
            }
        }
        if (p.y() <= ground_height + ground_eps) {
            if (p.y() < ground_height && movable) p.y() = ground_height;
            contacted = true;
            point = Vec3(p.x(), ground_height, p.z());
            normal = Vec3::UnitY();
        }
        if (contacted) {
            if (movable) state.particles.row(i) = p.transpose();
            contacts.push_back({static_cast<int>(i), point, normal});
        }
    }
    return contacts;
}

std::uint64_t scenario_seed(std::uint64_t base_seed, int object_index, int scenario_index) {
    return splitmix64(splitmix64(base_seed ^ (0xA0B1C2D3ull + static_cast<std::uint64_t>(object_index))) +
                      static_cast<std::uint64_t>(scenario_index));
}

ContactSample simulate_scenario(const SoftSpec& soft, const RigidCollider& collider_in,
                                std::uint64_t seed, const SimConfig& cfg) {
    validate_mesh(soft.mesh);
    validate_mesh(collider_in.mesh);
    collider_in.validate();
    RigidCollider collider = collider_in;
    if (cfg.dt <= 0.0 || cfg.substeps < 1 || cfg.solver_iterations < 0 || cfg.duration <= 0.0)
        throw std::invalid_argument("simulate_contact: invalid sim config");
    if (soft.stiffness <= 0.0 || soft.stiffness > 1.0)
        throw std::invalid_argument("stiffness must be in (0, 1]");
    if (soft.damping < 0.0 || soft.damping >= 1.0)
        throw std::invalid_argument("damping must be in [0, 1)");

    const MeshGraph graph = build_graph(soft.mesh);
    SoftBodyState state;
    state.particles = soft.mesh.vertices;
    state.velocities = MatX3::Zero(state.particles.rows(), 3);
    state.inverse_masses = VecX<double>::Ones(state.particles.rows());
    for (int idx : soft.pinned) {
        if (idx < 0 || idx >= state.particles.rows())
            throw std::invalid_argument("pinned index out of range: " + std::to_string(idx));
        state.inverse_masses[idx] = 0.0;
    }
    state.edges = graph.edges;
    state.stiffness = soft.stiffness;
    state.damping = soft.damping;
    state.rest_lengths.reserve(graph.edges.size());
    for (const auto& [a, b] : graph.edges) {
        const double len =
            edge_length(state.particles.row(a).transpose(), state.particles.row(b).transpose());
        if (len <= 0.0)
            throw std::invalid_argument("zero-length rest edge between vertices " +
                                        std::to_string(a) + " and " + std::to_string(b));
        state.rest_lengths.push_back(len);
    }

    const int frames = std::max(1, static_cast<int>(std::llround(cfg.duration / cfg.dt)));
    const double dt_s = cfg.dt / cfg.substeps;

    // best frame so far (most contacts, earliest wins ties)
    int best_count = -1;
    MatX3 best_positions = state.particles;
    std::vector<ContactEvent> best_contacts;
    RigidCollider best_collider = collider;

    MatX3 prev(state.particles.rows(), 3);
    for (int f = 0; f < frames; ++f) {
        std::vector<ContactEvent> frame_contacts;
        for (int s = 0; s < cfg.substeps; ++s) {
            prev = state.particles;
            for (Eigen::Index i = 0; i < state.particles.rows(); ++i) {
                if (state.inverse_masses[i] <= 0.0) continue;
                state.velocities.row(i) += dt_s * cfg.gravity.transpose();
                state.particles.row(i) += dt_s * state.velocities.row(i);
            }
            collider.velocity += dt_s / cfg.rigid_mass * collider.applied_force.magnitude *
                                 collider.applied_force.direction;
            collider.translation += dt_s * collider.velocity;

            // contact is an inequality constraint: every position update ends
            // with an immediate projection out of the collider and ground, so
            // the edge relaxation always works on a penetration-free state
            const ColliderFrame frame = build_frame(collider);
            auto apply_correction = [&](int node, const Vec3& dp) {
                Vec3 p = state.particles.row(node).transpose() + dp;
                project_out(frame, cfg.ground_height, p);
                state.particles.row(node) = p.transpose();
            };
            for (int it = 0; it < cfg.solver_iterations; ++it) {
                if (it == 0) resolve_collisions(state, collider, cfg.ground_height);
                for (std::size_t e = 0; e < state.edges.size(); ++e) {
                    const auto [a, b] = state.edges[e];
                    const double wa = state.inverse_masses[a], wb = state.inverse_masses[b];
                    if (wa + wb <= 0.0) continue;
                    const DistanceCorrection corr = project_distance_constraint(
                        state.particles.row(a).transpose(), state.particles.row(b).transpose(),
                        wa, wb, state.rest_lengths[e], state.stiffness);
                    if (corr.skipped) continue;
                    if (wa > 0.0) apply_correction(a, corr.dp1);
                    if (wb > 0.0) apply_correction(b, corr.dp2);
                }
            }
            // detection pass records the substep's contact set
            frame_contacts = resolve_collisions(state, collider, cfg.ground_height);

            for (Eigen::Index i = 0; i < state.particles.rows(); ++i) {
                if (state.inverse_masses[i] <= 0.0) continue;
                state.velocities.row(i) =
                    (state.particles.row(i) - prev.row(i)) / dt_s * (1.0 - state.damping);
            }
            if (!state.particles.allFinite())
                throw UnstableScenario("simulation produced non-finite positions", seed);
            const double vmax = state.velocities.rowwise().norm().maxCoeff();
            if (vmax > cfg.max_particle_speed)
                throw UnstableScenario("particle speed " + std::to_string(vmax) +
                                           " exceeded bound " +
                                           std::to_string(cfg.max_particle_speed),
                                       seed);
        }
        if (static_cast<int>(frame_contacts.size()) > best_count) {
            best_count = static_cast<int>(frame_contacts.size());
            best_positions = state.particles;
            best_contacts = std::move(frame_contacts);
            best_collider = collider;
        }
    }

    ContactSample sample;
    sample.rest_mesh = soft.mesh;
    sample.deformed_mesh.vertices = best_positions;
    sample.deformed_mesh.faces = soft.mesh.faces;
    sample.rigid = best_collider;
    sample.rigid.mesh.vertices = best_collider.world_vertices();  // bake contact pose
    sample.rigid.mesh.faces = collider_in.mesh.faces;
    sample.contact_points.resize(static_cast<Eigen::Index>(best_contacts.size()), 3);
    sample.contact_node_indices.reserve(best_contacts.size());
    for (std::size_t i = 0; i < best_contacts.size(); ++i) {
        sample.contact_points.row(static_cast<Eigen::Index>(i)) = best_contacts[i].point.transpose();
        sample.contact_node_indices.push_back(best_contacts[i].node);
    }
    sample.scenario_seed = seed;
    sample.stiffness = soft.stiffness;
    sample.damping = soft.damping;
    return sample;
}


ContactSample simulate_contact(const SoftSpec& soft, const TriMesh& collider_mesh,
                               std::uint64_t seed, const SimConfig& cfg) {
    validate_mesh(soft.mesh);
    validate_mesh(collider_mesh);
    // seeded scenario: approach direction, aim jitter, pose, speed, force
    std::mt19937_64 rng(seed);
    const Vec3 centroid = soft.mesh.vertices.colwise().mean().transpose();
    const double soft_radius =
        (soft.mesh.vertices.rowwise() - centroid.transpose()).rowwise().norm().maxCoeff();
    const Vec3 collider_centroid = collider_mesh.vertices.colwise().mean().transpose();
    const double collider_radius = (collider_mesh.vertices.rowwise() - collider_centroid.transpose())
                                       .rowwise()
                                       .norm()
                                       .maxCoeff();

    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const Vec3 approach = unit_vector(rng);
    const Vec3 aim = centroid + 0.25 * soft_radius * in_ball(rng);
    const Mat3 rotation = random_rotation(rng);
    const double depth = (0.20 + 0.30 * u01(rng)) * soft_radius;        // baseline embed depth
    const double force_depth = 0.35 * soft_radius * u01(rng);           // extra depth from force
    const double speed_jitter = 1.02 + 0.06 * u01(rng);
    const Vec3 force_jitter = 0.1 * in_ball(rng);

    RigidCollider collider;
    collider.mesh = collider_mesh;
    collider.rotation = rotation;
    collider.translation = centroid + approach * (soft_radius + collider_radius + 0.4 * soft_radius);
    Vec3 dir = (aim - collider.translation).normalized();
    // exact approach distance via a ray against the rest surface; a grazing
    // aim is retargeted at the centroid so every scenario makes contact
    double surface_t = ray_mesh_distance(collider.translation, dir, soft.mesh);
    if (surface_t <= 0.0) {
        dir = (centroid - collider.translation).normalized();
        surface_t = ray_mesh_distance(collider.translation, dir, soft.mesh);
        if (surface_t <= 0.0) surface_t = (centroid - collider.translation).norm() - soft_radius;
    }
    // the collider ends the run embedded roughly `depth` into the surface; the
    // force term (an observed feature) adds up to force_depth on top of that
    const double gap = std::max(0.0, surface_t - collider_radius);
    collider.velocity = dir * (speed_jitter * (gap + depth) / cfg.duration);
    const double force_mag =
        2.0 * cfg.rigid_mass * force_depth / (cfg.duration * cfg.duration);
    collider.applied_force = ForceDescriptor::from_vector(force_mag * (dir + force_jitter).normalized());

    return simulate_scenario(soft, collider, seed, cfg);
}

DatasetManifest generate_dataset(const std::vector<DatasetObject>& objects,
                                 int scenarios_per_object, std::uint64_t base_seed,
                                 const std::string& out_dir, const SimConfig& cfg, int workers) {
    namespace fs = std::filesystem;
    if (scenarios_per_object < 0)
        throw std::invalid_argument("scenarios_per_object must be >= 0");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create dataset dir " + out_dir + ": " + ec.message());

    DatasetManifest manifest;
    manifest.base_seed = base_seed;
    manifest.scenarios_per_object = scenarios_per_object;
    manifest.sim = cfg;

    struct Task {
        int object_index;
        int scenario_id;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    std::vector<double> ground(objects.size(), cfg.ground_height);
    for (std::size_t o = 0; o < objects.size(); ++o) {
        validate_mesh(objects[o].mesh);
        // objects float just above the ground plane; it matters only when the
        // collider shoves them downward
        const double min_y = objects[o].mesh.vertices.col(1).minCoeff();
        const Vec3 centroid = objects[o].mesh.vertices.colwise().mean().transpose();
        const double radius =
            (objects[o].mesh.vertices.rowwise() - centroid.transpose()).rowwise().norm().maxCoeff();
        ground[o] = min_y - 0.05 * radius;
        for (int s = 0; s < scenarios_per_object; ++s)
            tasks.push_back({static_cast<int>(o), s, scenario_seed(base_seed, static_cast<int>(o), s)});
    }

    std::vector<std::string> failures(tasks.size());
    std::vector<char> failed(tasks.size(), 0);
    std::atomic<std::size_t> cursor{0};
    std::atomic<bool> fatal{false};
    std::string fatal_message;
    std::mutex fatal_mutex;

    auto run_task = [&](const Task& task) {
        const DatasetObject& obj = objects[static_cast<std::size_t>(task.object_index)];
        SimConfig local = cfg;
        local.ground_height = ground[static_cast<std::size_t>(task.object_index)];

        // seeded collider choice, independent of the scenario's own stream
        std::mt19937_64 crng(splitmix64(task.seed ^ 0xC011D3Full));
        std::uniform_real_distribution<double> uscale(0.35, 0.60);
        const Vec3 centroid = obj.mesh.vertices.colwise().mean().transpose();
        const double radius =
            (obj.mesh.vertices.rowwise() - centroid.transpose()).rowwise().norm().maxCoeff();
        const int shape = static_cast<int>(crng() % 3);
        const TriMesh collider = make_collider(shape, uscale(crng) * radius);

        SoftSpec spec{obj.mesh, obj.stiffness, obj.damping, {}};
        ContactSample sample = simulate_contact(spec, collider, task.seed, local);
        write_sample(sample_dir(out_dir, obj.name, task.scenario_id), sample);
    };

    const unsigned n_workers = workers > 0
                                   ? static_cast<unsigned>(workers)
                                   : std::max(1u, std::thread::hardware_concurrency());
    auto worker = [&] {
        while (!fatal.load()) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= tasks.size()) return;
            try {
                run_task(tasks[i]);
            } catch (const UnstableScenario& e) {
                failed[i] = 1;
                failures[i] = e.what();
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(fatal_mutex);
                fatal = true;
                fatal_message = e.what();
                return;
            }
        }
    };
    if (n_workers <= 1 || tasks.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (fatal) throw std::runtime_error("dataset generation failed: " + fatal_message);

    const int train_cut = static_cast<int>(std::floor(0.8 * scenarios_per_object));
    std::size_t t = 0;
    for (std::size_t o = 0; o < objects.size(); ++o) {
        ObjectManifest om;
        om.name = objects[o].name;
        om.stiffness = objects[o].stiffness;
        om.damping = objects[o].damping;
        om.ground_height = ground[o];
        for (int s = 0; s < scenarios_per_object; ++s, ++t) {
            if (failed[t]) {
                om.skipped.push_back({s, tasks[t].seed, failures[t]});
                continue;
            }
            om.scenarios.push_back(s);
            (s < train_cut ? om.train : om.test).push_back(s);
        }
        manifest.objects.push_back(std::move(om));
    }
    write_manifest((fs::path(out_dir) / "manifest.json").string(), manifest);
    return manifest;
}

}  // namespace deformcast
