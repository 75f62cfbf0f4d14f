#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "deformcast/encoding.hpp"
#include "deformcast/mesh.hpp"
#include "deformcast/types.hpp"

namespace deformcast {

/// Particle state of the deformable body. Distance constraints run along the
/// mesh-graph edges; pinned particles carry inverse mass 0.
struct SoftBodyState {
    MatX3 particles;
    MatX3 velocities;
    VecX<double> inverse_masses;
    std::vector<std::pair<int, int>> edges;
    std::vector<double> rest_lengths;
    double stiffness = 1.0;   // in (0, 1]
    double damping = 0.02;    // per-substep velocity decay, in [0, 1)
};

/// Kinematic convex collider. Vertices are stored in the collider's local
/// frame; world position is rotation * v + translation.
struct RigidCollider {
    TriMesh mesh;
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();
    Vec3 velocity = Vec3::Zero();
    ForceDescriptor applied_force;

    void validate() const {
        if ((rotation.transpose() * rotation - Mat3::Identity()).norm() > 1e-6 ||
            rotation.determinant() < 0.0)
            throw std::invalid_argument("collider rotation must be orthonormal with det +1");
    }
    Mat4 pose_matrix() const {
        Mat4 m = Mat4::Identity();
        m.topLeftCorner<3, 3>() = rotation;
        m.topRightCorner<3, 1>() = translation;
        return m;
    }
    MatX3 world_vertices() const {
        return (mesh.vertices * rotation.transpose()).rowwise() + translation.transpose();
    }
};

/// One labeled scenario. `rigid.mesh` here holds the collider in its
/// contact-frame world pose (the transform already applied); `rigid.rotation`
/// and `rigid.translation` record the transform that placed it there.
struct ContactSample {
    TriMesh rest_mesh;
    TriMesh deformed_mesh;
    RigidCollider rigid;
    MatX3 contact_points;
    std::vector<int> contact_node_indices;
    std::uint64_t scenario_seed = 0;
    double stiffness = 1.0;
    double damping = 0.02;
};

struct SimConfig {
    double dt = 1.0 / 60.0;
    int substeps = 4;
    int solver_iterations = 10;
    double duration = 1.0;
    Vec3 gravity = Vec3::Zero();
    double ground_height = -1e30;        // effectively no ground unless raised
    double max_particle_speed = 1e3;     // exceeded => UnstableScenario
    double rigid_mass = 1.0;             // applied force accelerates the collider
};

struct DistanceCorrection {
    Vec3 dp1 = Vec3::Zero();
    Vec3 dp2 = Vec3::Zero();
    bool skipped = false;  // coincident particles: no correction this iteration
};

/// Position-based projection of |p1-p2| toward rest_length, split by inverse
/// mass and scaled by stiffness.
DistanceCorrection project_distance_constraint(const Vec3& p1, const Vec3& p2, double w1,
                                               double w2, double rest_length, double stiffness);

struct ContactEvent {
    int node;
    Vec3 point;   // on the collider surface or the ground plane
    Vec3 normal;  // outward surface normal at the contact
};

/// Projects penetrating particles to the collider surface (convex half-space
/// test, nearest face plane) and clamps particles under the ground plane.
/// Pinned particles are reported but never moved. Returns the contact list.
std::vector<ContactEvent> resolve_collisions(SoftBodyState& state, const RigidCollider& collider,
                                             double ground_height);

/// Soft object plus its fixed material, the unit fed to the simulator.
struct SoftSpec {
    TriMesh mesh;
    double stiffness = 0.9;
    double damping = 0.02;
    std::vector<int> pinned;  // vertex indices with inverse mass 0
};

/// Runs one seeded scenario: the collider starts on a sphere around the soft
/// body, flies at a jittered aim point near the centroid, and the sample is
/// captured at the frame with the most contacts.
ContactSample simulate_contact(const SoftSpec& soft, const TriMesh& collider_mesh,
                               std::uint64_t scenario_seed, const SimConfig& cfg);

/// The integrator under simulate_contact, with the collider's initial pose,
/// velocity, and applied force supplied by the caller instead of sampled.
ContactSample simulate_scenario(const SoftSpec& soft, const RigidCollider& collider,
                                std::uint64_t record_seed, const SimConfig& cfg);

struct DatasetObject {
    std::string name;
    TriMesh mesh;
    double stiffness = 0.9;
    double damping = 0.02;
};

struct SkippedScenario {
    int id;
    std::uint64_t seed;
    std::string reason;
};

struct ObjectManifest {
    std::string name;
    double stiffness = 0.9;
    double damping = 0.02;
    double ground_height = 0.0;
    std::vector<int> scenarios;  // successfully written ids
    std::vector<int> train;
    std::vector<int> test;
    std::vector<SkippedScenario> skipped;
};

struct DatasetManifest {
    std::uint64_t base_seed = 0;
    int scenarios_per_object = 0;
    SimConfig sim;
    std::vector<ObjectManifest> objects;
};

/// Derived per-scenario seed, stable across runs and worker counts.
std::uint64_t scenario_seed(std::uint64_t base_seed, int object_index, int scenario_index);

/// Simulates scenarios_per_object scenarios per object in parallel, writes
/// the dataset layout under out_dir, and returns the manifest (also written
/// to out_dir/manifest.json). Unstable scenarios are logged in the manifest,
/// never silently dropped. workers = 0 picks the hardware concurrency.
DatasetManifest generate_dataset(const std::vector<DatasetObject>& objects,
                                 int scenarios_per_object, std::uint64_t base_seed,
                                 const std::string& out_dir, const SimConfig& cfg,
                                 int workers = 0);

}  // namespace deformcast
