// SPDX-License-Identifier: Apache-2.0
#include "snd/synth.hpp"

#include <gtest/gtest.h>

#include <set>

namespace snd::synth {
namespace {

SceneSpec small_spec(std::uint64_t seed) {
    SceneSpec s = random_scene_spec(seed, 3);
    s.gaussians_per_object = 200;
    s.shell_spacing = 0.12;
    return s;
}

ViewSpec small_views() {
    ViewSpec v;
    v.num_views = 4;
    v.image_size = 32;
    return v;
}

TEST(SceneSpecTest, RandomSpecIsDeterministicAndValid) {
    const SceneSpec a = random_scene_spec(42, 4);
    EXPECT_EQ(a, random_scene_spec(42, 4));
    EXPECT_NE(a, random_scene_spec(43, 4));
    ASSERT_EQ(a.num_objects(), 4);
    for (int i = 0; i < 4; ++i) {
        EXPECT_EQ(a.objects[static_cast<std::size_t>(i)].label, static_cast<Label>(i + 1));
    }
    EXPECT_NO_THROW(a.validate());
    EXPECT_EQ(a.floor_label(), 5u);
    EXPECT_EQ(a.wall_label(3), 9u);
}

TEST(SceneSpecTest, ValidationRejectsBadSpecs) {
    SceneSpec s = random_scene_spec(1, 2);
    s.objects[1].label = s.objects[0].label;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = random_scene_spec(1, 2);
    s.objects[0].label = 0;
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s = random_scene_spec(1, 2);
    s.objects[0].color = Vec3(1.2, 0, 0);
    EXPECT_THROW(s.validate(), std::invalid_argument);
    s.objects.clear();
    EXPECT_THROW(s.validate(), std::invalid_argument);
    EXPECT_THROW(random_scene_spec(1, 0), std::invalid_argument);
    EXPECT_THROW(object_kind_from_string("sphere"), std::invalid_argument);
    EXPECT_EQ(object_kind_from_string(to_string(ObjectKind::kEllipsoidCluster)), ObjectKind::kEllipsoidCluster);
}

TEST(SemanticClassTest, MapsLabelsToCategories) {
    SceneSpec s = random_scene_spec(3, 2);
    s.objects[0].kind = ObjectKind::kBox;
    s.objects[1].kind = ObjectKind::kEllipsoidCluster;
    EXPECT_EQ(semantic_class(s, 0), SemanticClass::kBackground);
    EXPECT_EQ(semantic_class(s, 1), SemanticClass::kBox);
    EXPECT_EQ(semantic_class(s, 2), SemanticClass::kEllipsoid);
    EXPECT_EQ(semantic_class(s, s.floor_label()), SemanticClass::kFloor);
    for (int w = 0; w < 4; ++w) {
        EXPECT_EQ(semantic_class(s, s.wall_label(w)), SemanticClass::kWall);
    }
    EXPECT_THROW(semantic_class(s, 99), std::invalid_argument);
}

TEST(GenerateScene, DeterministicAndWellFormed) {
    const SceneSpec spec = small_spec(7);
    const GeneratedScene a = generate_scene(spec);
    const GeneratedScene b = generate_scene(spec);
    ASSERT_EQ(a.gaussians.size(), b.gaussians.size());
    std::set<Label> labels;
    for (std::size_t i = 0; i < a.gaussians.size(); ++i) {
        const Gaussian& g = a.gaussians[i];
        EXPECT_EQ(g.mean(), b.gaussians[i].mean());
        EXPECT_EQ(g.feature(), b.gaussians[i].feature());
        ASSERT_EQ(g.feature().size(), 3);
        EXPECT_GE(g.feature().minCoeff(), 0.0);
        EXPECT_LE(g.feature().maxCoeff(), 1.0);
        EXPECT_LE(std::abs(g.mean().x()), spec.room_half_extent + 1e-9);
        EXPECT_LE(std::abs(g.mean().y()), spec.room_half_extent + 1e-9);
        labels.insert(g.label());
    }
    // three objects, floor and four walls
    EXPECT_EQ(labels.size(), 8u);
    EXPECT_FALSE(labels.contains(0));
}

TEST(CameraArc, LooksAtTheRoomCentre) {
    const ViewSpec v = small_views();
    const auto cams = camera_arc(v, 5);
    ASSERT_EQ(cams.size(), 4u);
    for (const Camera& c : cams) {
        const auto p = project_point(c, v.look_at);
        ASSERT_TRUE(p);
        EXPECT_NEAR(p->pixel.x(), 16.0, 3.0);
        EXPECT_NEAR(p->pixel.y(), 16.0, 3.0);
        EXPECT_NEAR(Vec2(c.center().x(), c.center().y()).norm(), v.radius, 0.2);
    }
    const auto again = camera_arc(v, 5);
    EXPECT_EQ(again[2].pose().rotation, cams[2].pose().rotation);
    ViewSpec bad = v;
    bad.target = bad.context_a;
    EXPECT_THROW(camera_arc(bad, 5), std::invalid_argument);
}

TEST(GroundTruth, DepthAndMaskAreConsistent) {
    const GeneratedScene scene = generate_scene(small_spec(9));
    const ViewSpec v = small_views();
    const Camera cam = camera_arc(v, scene.spec.seed)[0];
    const GroundTruthView gt = render_groundtruth(scene, cam);
    int foreground = 0;
    std::set<Label> known;
    for (const Gaussian& g : scene.gaussians) {
        known.insert(g.label());
    }
    for (int r = 0; r < 32; ++r) {
        for (int c = 0; c < 32; ++c) {
            const double d = gt.depth.at(r, c, 0);
            const double a = gt.alpha.at(r, c, 0);
            if (a < 0.5) {
                EXPECT_EQ(d, 0.0);
                EXPECT_EQ(gt.mask.at(r, c), 0u);
                continue;
            }
            ++foreground;
            EXPECT_GT(d, 0.0);
            EXPECT_LT(d, 10.0);
            EXPECT_TRUE(known.contains(gt.mask.at(r, c)));
            for (int ch = 0; ch < 3; ++ch) {
                EXPECT_GE(gt.color.at(r, c, ch), 0.0);
                EXPECT_LE(gt.color.at(r, c, ch), 1.0);
            }
        }
    }
    // the room encloses the camera, so almost every pixel is covered
    EXPECT_GT(foreground, 32 * 32 * 9 / 10);
}

TEST(GroundTruth, ImagesAreNotFlat) {
    const GeneratedScene scene = generate_scene(small_spec(11));
    const auto views = render_views(scene, small_views());
    ASSERT_EQ(views.size(), 4u);
    const FeatureMap& img = views[0].image;
    double lo = 1.0, hi = 0.0;
    for (double x : img.data()) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    EXPECT_GT(hi - lo, 0.2);
    std::set<Label> seen(views[0].mask.labels().begin(), views[0].mask.labels().end());
    EXPECT_GE(seen.size(), 3u);
}

TEST(Dataset, SeedsAreSequential) {
    const auto d = make_dataset(100, 2, 2, 2, small_views());
    ASSERT_EQ(d.size(), 2u);
    EXPECT_EQ(d[0].scene.spec.seed, 102u);
    EXPECT_EQ(d[1].scene.spec.seed, 103u);
    EXPECT_EQ(d[0].views.size(), 4u);
}

} // namespace
} // namespace snd::synth
