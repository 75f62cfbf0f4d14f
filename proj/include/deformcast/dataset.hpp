#pragma once

#include <optional>
#include <string>

#include "deformcast/mesh.hpp"
#include "deformcast/sim.hpp"

namespace deformcast {

/// meta.json/manifest.json field missing or of the wrong type.
class SchemaError : public std::runtime_error {
public:
    SchemaError(const std::string& file, const std::string& field)
        : std::runtime_error("schema violation in " + file + ": field '" + field + "'"),
          field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

std::string sample_dir(const std::string& dataset_dir, const std::string& object_name,
                       int scenario_id);

/// Writes rest.obj / deformed.obj / rigid.obj / meta.json into `dir`
/// (created if missing). rigid.obj is stored with the pose baked in.
void write_sample(const std::string& dir, const ContactSample& sample);

/// Loads and validates one sample directory: identical face lists between
/// rest and deformed, contact indices in range, meta schema.
ContactSample load_sample(const std::string& dir);

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest load_manifest(const std::string& path);

/// One network-ready sample: normalized graphs, force, and target positions
/// (the deformed coordinates of the same nodes, same transform applied).
struct TrainingInstance {
    MeshGraph soft;
    MeshGraph rigid;
    ForceDescriptor force;
    MatX3 target;
    NormalizationTransform transform;
    std::vector<int> patch_to_mesh;  // empty when the full mesh is used
};

/// Builds graphs, optionally restricts the soft body to the patch of
/// `patch_size` vertices nearest the contact centroid, and normalizes.
/// Returns nullopt (skip-sample) when a patch is requested but the sample
/// recorded no contact points.
std::optional<TrainingInstance> make_training_instance(const ContactSample& sample,
                                                       std::optional<int> patch_size);

}  // namespace deformcast
