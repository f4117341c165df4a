// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "snd/lifting.hpp"
#include "snd/rasterizer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace snd::synth {

enum class ObjectKind { kBox, kEllipsoidCluster };

std::string to_string(ObjectKind kind);
ObjectKind object_kind_from_string(const std::string& s);

struct ObjectSpec {
    ObjectKind kind = ObjectKind::kBox;
    Label label = 1;
    Vec3 color = Vec3::Constant(0.5);

    friend bool operator==(const ObjectSpec&, const ObjectSpec&) = default;
};

/// Procedural room: a floor and four walls enclosing `objects`.
struct SceneSpec {
    std::uint64_t seed = 0;
    double room_half_extent = 2.5; // metres
    double wall_height = 2.0;
    int gaussians_per_object = 800;
    double shell_spacing = 0.06; // metres between shell Gaussians
    std::vector<ObjectSpec> objects;

    int num_objects() const { return static_cast<int>(objects.size()); }
    /// Throws std::invalid_argument on an empty object list, duplicate labels,
    /// label 0, or colours outside [0, 1].
    void validate() const;

    Label floor_label() const;
    /// Walls are labelled floor_label() + 1 .. floor_label() + 4.
    Label wall_label(int wall) const;

    friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

/// Random object kinds, distinct labels 1..n and colours, all derived from `seed`.
SceneSpec random_scene_spec(std::uint64_t seed, int num_objects);

/// Category ids shared across scenes; used as segmentation probe targets.
enum class SemanticClass : Label { kBackground = 0, kFloor = 1, kWall = 2, kBox = 3, kEllipsoid = 4 };
inline constexpr int kNumSemanticClasses = 5;

SemanticClass semantic_class(const SceneSpec& spec, Label label);

struct GeneratedScene {
    SceneSpec spec;
    std::vector<Gaussian> gaussians; // feature = RGB colour
};

/// Deterministic in spec.seed. Object Gaussians are flat discs on primitive surfaces.
GeneratedScene generate_scene(const SceneSpec& spec);

/// Camera arc around the room centre.
struct ViewSpec {
    int num_views = 12;
    double radius = 2.0;
    double height = 1.3;
    Vec3 look_at = {0.0, 0.0, 0.4};
    double fov_deg = 70.0;
    double arc_deg = 120.0;
    double angle_jitter_deg = 2.0;
    double position_jitter = 0.05;
    int image_size = 64;
    // default context pair and target for single-shot rendering; target lies between
    int context_a = 0;
    int context_b = 2;
    int target = 1;

    void validate() const;
};

std::vector<Camera> camera_arc(const ViewSpec& spec, std::uint64_t seed);

struct GroundTruthView {
    FeatureMap color; // H x W x 3
    FeatureMap depth; // H x W x 1, 0 = background
    SemanticMask mask;
    FeatureMap alpha; // H x W x 1
};

/// Colour by compositing; depth is the alpha-normalised expected splat depth; the
/// label is the one with the largest accumulated alpha. Pixels with alpha < 0.5
/// become background (depth 0, label 0).
GroundTruthView render_groundtruth(const GeneratedScene& scene, const Camera& cam,
                                   const RasterSettings& settings = {});

/// All views of a scene, ready for lifting and training.
std::vector<ContextView> render_views(const GeneratedScene& scene, const ViewSpec& views,
                                      const RasterSettings& settings = {});

struct DatasetScene {
    GeneratedScene scene;
    std::vector<ContextView> views;
};

/// Scene seeds are base_seed + first_index .. base_seed + first_index + count - 1.
std::vector<DatasetScene> make_dataset(std::uint64_t base_seed, int first_index, int count, int num_objects,
                                       const ViewSpec& views);

} // namespace snd::synth
