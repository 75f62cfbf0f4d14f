#include "deformcast/dataset.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace deformcast {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ParseError(path + ": " + e.what());
    }
    return j;
}

void dump_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

// json::at with the schema-violation error contract
template <class T>
T field(const json& j, const std::string& file, const std::string& name) {
    if (!j.contains(name)) throw SchemaError(file, name);
    try {
        return j.at(name).get<T>();
    } catch (const json::exception&) {
        throw SchemaError(file, name);
    }
}

json vec3_to_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec3_from_json(const json& j, const std::string& file, const std::string& name) {
    if (!j.is_array() || j.size() != 3) throw SchemaError(file, name);
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

std::string sample_dir(const std::string& dataset_dir, const std::string& object_name,
                       int scenario_id) {
    return (fs::path(dataset_dir) / object_name / std::to_string(scenario_id)).string();
}

void write_sample(const std::string& dir, const ContactSample& sample) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create sample dir " + dir + ": " + ec.message());

    save_mesh_obj(sample.rest_mesh, (fs::path(dir) / "rest.obj").string());
    save_mesh_obj(sample.deformed_mesh, (fs::path(dir) / "deformed.obj").string());
    save_mesh_obj(sample.rigid.mesh, (fs::path(dir) / "rigid.obj").string());

    json meta;
    const Mat4 pose = sample.rigid.pose_matrix();
    json jpose = json::array();
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) jpose.push_back(pose(r, c));
    meta["rigid_pose"] = jpose;
    meta["velocity"] = vec3_to_json(sample.rigid.velocity);
    meta["force_dir"] = vec3_to_json(sample.rigid.applied_force.direction);
    meta["force_mag"] = sample.rigid.applied_force.magnitude;
    json jpoints = json::array();
    for (Eigen::Index i = 0; i < sample.contact_points.rows(); ++i)
        jpoints.push_back(vec3_to_json(sample.contact_points.row(i).transpose()));
    meta["contact_points"] = jpoints;
    meta["contact_node_indices"] = sample.contact_node_indices;
    meta["stiffness"] = sample.stiffness;
    meta["damping"] = sample.damping;
    meta["seed"] = sample.scenario_seed;
    dump_json((fs::path(dir) / "meta.json").string(), meta);
}

ContactSample load_sample(const std::string& dir) {
    const std::string meta_path = (fs::path(dir) / "meta.json").string();
    ContactSample sample;
    sample.rest_mesh = load_mesh((fs::path(dir) / "rest.obj").string());
    sample.deformed_mesh = load_mesh((fs::path(dir) / "deformed.obj").string());
    sample.rigid.mesh = load_mesh((fs::path(dir) / "rigid.obj").string());

    if (sample.rest_mesh.faces != sample.deformed_mesh.faces)
        throw std::invalid_argument("invariant violation in " + dir +
                                    ": rest and deformed face lists differ");

    const json meta = load_json(meta_path);
    const json jpose = meta.contains("rigid_pose") ? meta["rigid_pose"] : json();
    if (!jpose.is_array() || jpose.size() != 16) throw SchemaError(meta_path, "rigid_pose");
    Mat4 pose;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) pose(r, c) = jpose[static_cast<std::size_t>(4 * r + c)].get<double>();
    sample.rigid.rotation = pose.topLeftCorner<3, 3>();
    sample.rigid.translation = pose.topRightCorner<3, 1>();
    sample.rigid.validate();

    if (!meta.contains("velocity")) throw SchemaError(meta_path, "velocity");
    sample.rigid.velocity = vec3_from_json(meta["velocity"], meta_path, "velocity");
    if (!meta.contains("force_dir")) throw SchemaError(meta_path, "force_dir");
    sample.rigid.applied_force.direction = vec3_from_json(meta["force_dir"], meta_path, "force_dir");
    sample.rigid.applied_force.magnitude = field<double>(meta, meta_path, "force_mag");
    sample.rigid.applied_force.validate();

    if (!meta.contains("contact_points")) throw SchemaError(meta_path, "contact_points");
    const json& jpoints = meta["contact_points"];
    if (!jpoints.is_array()) throw SchemaError(meta_path, "contact_points");
    sample.contact_points.resize(static_cast<Eigen::Index>(jpoints.size()), 3);
    for (std::size_t i = 0; i < jpoints.size(); ++i)
        sample.contact_points.row(static_cast<Eigen::Index>(i)) =
            vec3_from_json(jpoints[i], meta_path, "contact_points").transpose();

    sample.contact_node_indices = field<std::vector<int>>(meta, meta_path, "contact_node_indices");
    if (sample.contact_node_indices.size() != static_cast<std::size_t>(sample.contact_points.rows()))
        throw SchemaError(meta_path, "contact_node_indices");
    for (int idx : sample.contact_node_indices)
        if (idx < 0 || idx >= sample.rest_mesh.vertex_count())
            throw std::invalid_argument("invariant violation in " + dir +
                                        ": contact node index " + std::to_string(idx) +
                                        " out of range");

    sample.stiffness = field<double>(meta, meta_path, "stiffness");
    sample.damping = field<double>(meta, meta_path, "damping");
    sample.scenario_seed = field<std::uint64_t>(meta, meta_path, "seed");
    return sample;
}

namespace {

json sim_config_to_json(const SimConfig& c) {
    return {{"dt", c.dt},
            {"substeps", c.substeps},
            {"solver_iterations", c.solver_iterations},
            {"duration", c.duration},
            {"gravity", vec3_to_json(c.gravity)},
            {"ground_height", c.ground_height},
            {"max_particle_speed", c.max_particle_speed},
            {"rigid_mass", c.rigid_mass}};
}

SimConfig sim_config_from_json(const json& j, const std::string& file) {
    SimConfig c;
    c.dt = field<double>(j, file, "dt");
    c.substeps = field<int>(j, file, "substeps");
    c.solver_iterations = field<int>(j, file, "solver_iterations");
    c.duration = field<double>(j, file, "duration");
    if (!j.contains("gravity")) throw SchemaError(file, "gravity");
    c.gravity = vec3_from_json(j["gravity"], file, "gravity");
    c.ground_height = field<double>(j, file, "ground_height");
    c.max_particle_speed = field<double>(j, file, "max_particle_speed");
    c.rigid_mass = field<double>(j, file, "rigid_mass");
    return c;
}

}  // namespace

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
    json j;
    j["base_seed"] = manifest.base_seed;
    j["scenarios_per_object"] = manifest.scenarios_per_object;
    j["sim_config"] = sim_config_to_json(manifest.sim);
    json jobjects = json::array();
    for (const auto& om : manifest.objects) {
        json jo;
        jo["name"] = om.name;
        jo["stiffness"] = om.stiffness;
        jo["damping"] = om.damping;
        jo["ground_height"] = om.ground_height;
        jo["scenarios"] = om.scenarios;
        jo["train"] = om.train;
        jo["test"] = om.test;
        json jskip = json::array();
        for (const auto& s : om.skipped)
            jskip.push_back({{"id", s.id}, {"seed", s.seed}, {"reason", s.reason}});
        jo["skipped"] = jskip;
        jobjects.push_back(jo);
    }
    j["objects"] = jobjects;
    dump_json(path, j);
}

DatasetManifest load_manifest(const std::string& path) {
    const json j = load_json(path);
    DatasetManifest m;
    m.base_seed = field<std::uint64_t>(j, path, "base_seed");
    m.scenarios_per_object = field<int>(j, path, "scenarios_per_object");
    if (!j.contains("sim_config")) throw SchemaError(path, "sim_config");
    m.sim = sim_config_from_json(j["sim_config"], path);
    if (!j.contains("objects") || !j["objects"].is_array()) throw SchemaError(path, "objects");
    for (const auto& jo : j["objects"]) {
        ObjectManifest om;
        om.name = field<std::string>(jo, path, "name");
        om.stiffness = field<double>(jo, path, "stiffness");
        om.damping = field<double>(jo, path, "damping");
        om.ground_height = field<double>(jo, path, "ground_height");
        om.scenarios = field<std::vector<int>>(jo, path, "scenarios");
        om.train = field<std::vector<int>>(jo, path, "train");
        om.test = field<std::vector<int>>(jo, path, "test");
        if (jo.contains("skipped")) {
            for (const auto& js : jo["skipped"])
                om.skipped.push_back({field<int>(js, path, "id"),
                                      field<std::uint64_t>(js, path, "seed"),
                                      field<std::string>(js, path, "reason")});
        }
        m.objects.push_back(std::move(om));
    }
    return m;
}

std::optional<TrainingInstance> make_training_instance(const ContactSample& sample,
                                                       std::optional<int> patch_size) {
    MeshGraph soft = build_graph(sample.rest_mesh);
    MeshGraph rigid = build_graph(sample.rigid.mesh);
    MatX3 target = sample.deformed_mesh.vertices;

    TrainingInstance inst;
    if (patch_size) {
        if (sample.contact_points.rows() == 0) return std::nullopt;  // skip-sample
        const Vec3 anchor = sample.contact_points.colwise().mean().transpose();
        auto [patch, index_map] = extract_patch(soft, anchor, *patch_size);
        MatX3 patch_target(patch.node_count(), 3);
        for (Eigen::Index i = 0; i < patch.node_count(); ++i)
            patch_target.row(i) = target.row(index_map[static_cast<std::size_t>(i)]);
        soft = std::move(patch);
        target = std::move(patch_target);
        inst.patch_to_mesh = std::move(index_map);
    }

    NormalizedPair norm = normalize_pair(soft, rigid);
    inst.soft = std::move(norm.soft);
    inst.rigid = std::move(norm.rigid);
    inst.transform = norm.transform;
    inst.target = inst.transform.apply(target);
    inst.force = sample.rigid.applied_force;
    return inst;
}

}  // namespace deformcast
