// SPDX-License-Identifier: Apache-2.0
#include "snd/lifting.hpp"
#include "snd/parallel.hpp"
#include "snd/rasterizer.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace snd {
namespace {

Gaussian iso(const Vec3& mean, double sigma, double opacity, VecX feature) {
    return Gaussian(mean, Eigen::Quaterniond::Identity(), Vec3::Constant(sigma), opacity, std::move(feature));
}

VecX vec(std::initializer_list<double> v) {
    VecX out(static_cast<Eigen::Index>(v.size()));
    int i = 0;
    for (double x : v) {
        out[i++] = x;
    }
    return out;
}

std::vector<Gaussian> random_scene(std::uint64_t seed, int count, int channels) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1), unit(0, 1);
    std::vector<Gaussian> gs;
    for (int i = 0; i < count; ++i) {
        VecX f(channels);
        for (int c = 0; c < channels; ++c) {
            f[c] = u(rng);
        }
        gs.emplace_back(Vec3(u(rng), u(rng), 2 + 3 * unit(rng)), Eigen::Quaterniond(u(rng), u(rng), u(rng), u(rng)),
                        Vec3(0.02 + 0.1 * unit(rng), 0.02 + 0.1 * unit(rng), 0.02 + 0.1 * unit(rng)), unit(rng),
                        std::move(f));
    }
    return gs;
}

TEST(ProjectGaussian, OnAxisIsotropicVariance) {
    const Camera cam(50, 60, 32, 32, 64, 64);
    const double sigma = 0.1, z = 2.0;
    RasterSettings s;
    const auto splat = project_gaussian(iso(Vec3(0, 0, z), sigma, 0.5, vec({1})), 0, cam, s);
    ASSERT_TRUE(splat);
    EXPECT_NEAR(splat->cov2d(0, 0), std::pow(50 * sigma / z, 2) + s.lowpass_floor, 1e-12);
    EXPECT_NEAR(splat->cov2d(1, 1), std::pow(60 * sigma / z, 2) + s.lowpass_floor, 1e-12);
    EXPECT_NEAR(splat->cov2d(0, 1), 0.0, 1e-15);
    EXPECT_EQ(splat->center, Vec2(32, 32));
    EXPECT_TRUE((splat->conic * splat->cov2d).isApprox(Mat2::Identity(), 1e-12));
}

TEST(ProjectGaussian, CullsBehindAndFarOutside) {
    const Camera cam(50, 50, 32, 32, 64, 64);
    EXPECT_FALSE(project_gaussian(iso(Vec3(0, 0, -1), 0.1, 0.5, vec({1})), 0, cam));
    EXPECT_FALSE(project_gaussian(iso(Vec3(0, 0, 0), 0.1, 0.5, vec({1})), 0, cam));
    // 100 sigma (in pixels) to the right of the viewport
    const double sigma = 0.01, z = 1.0;
    const double x = (64 - 32 + 100 * 50 * sigma / z) / 50 * z;
    EXPECT_FALSE(project_gaussian(iso(Vec3(x, 0, z), sigma, 0.5, vec({1})), 0, cam));
}

TEST(ProjectGaussian, CovarianceEigenvaluesRespectFloor) {
    const Camera cam(50, 50, 32, 32, 64, 64);
    for (const Gaussian& g : random_scene(5, 200, 1)) {
        const auto s = project_gaussian(g, 0, cam);
        if (!s) {
            continue;
        }
        Eigen::SelfAdjointEigenSolver<Mat2> eig(s->cov2d);
        EXPECT_GE(eig.eigenvalues().minCoeff(), RasterSettings{}.lowpass_floor - 1e-12);
        EXPECT_GT(s->depth, kDepthEpsilon);
    }
}

Splat2D centered_splat(double opacity, const VecX& f, int index) {
    Splat2D s;
    s.center = Vec2(5, 5);
    s.cov2d = Mat2::Identity();
    s.conic = Mat2::Identity();
    s.depth = 1.0 + index;
    s.opacity = opacity;
    s.feature = {f.data(), static_cast<std::size_t>(f.size())};
    s.gaussian_index = index;
    return s;
}

TEST(CompositePixel, SingleSplatIsClamped) {
    const VecX f = vec({2.0, -1.0});
    const std::vector<Splat2D> splats{centered_splat(1.0, f, 0)};
    const CompositeResult r = composite_pixel(splats, Vec2(5, 5), 2);
    EXPECT_DOUBLE_EQ(r.alpha, 0.999);
    EXPECT_DOUBLE_EQ(r.feature[0], 0.999 * 2.0);
    EXPECT_DOUBLE_EQ(r.feature[1], -0.999);
}

TEST(CompositePixel, TwoSplatsFrontToBack) {
    const VecX f1 = vec({1.0, 0.0}), f2 = vec({0.0, 1.0});
    const std::vector<Splat2D> splats{centered_splat(0.6, f1, 0), centered_splat(0.6, f2, 1)};
    const CompositeResult r = composite_pixel(splats, Vec2(5, 5), 2);
    EXPECT_NEAR(r.feature[0], 0.6, 1e-15);
    EXPECT_NEAR(r.feature[1], 0.24, 1e-15);
    EXPECT_NEAR(r.alpha, 0.84, 1e-15);
}

TEST(CompositePixel, EmptyListIsZero) {
    const CompositeResult r = composite_pixel({}, Vec2(1, 1), 3);
    EXPECT_EQ(r.alpha, 0.0);
    EXPECT_TRUE(r.feature.isZero());
    EXPECT_EQ(r.feature.size(), 3);
}

TEST(CompositePixel, StopsAtTransmittanceCutoff) {
    const VecX f = vec({1.0});
    std::vector<Splat2D> splats;
    for (int i = 0; i < 5; ++i) {
        splats.push_back(centered_splat(1.0, f, i));
    }
    // after two clamped splats T = 1e-6 < 1e-4, so the third never contributes
    const CompositeResult r = composite_pixel(splats, Vec2(5, 5), 1);
    EXPECT_NEAR(r.alpha, 1.0 - 1e-6, 1e-12);
    EXPECT_NEAR(r.feature[0], 0.999 + 0.001 * 0.999, 1e-12);
}

TEST(Render, EmptySceneIsZero) {
    const Camera cam(50, 50, 16, 16, 32, 32);
    const RenderOutput out = render(std::vector<Gaussian>{}, 4, cam);
    EXPECT_EQ(out.features.channels(), 4);
    for (double v : out.features.data()) {
        EXPECT_EQ(v, 0.0);
    }
    for (double v : out.alpha.data()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(Render, SingleGaussianIsLocal) {
    const Camera cam(50, 50, 32, 32, 64, 64);
    const RenderOutput out = render(std::vector{iso(Vec3(0, 0, 2), 0.05, 0.9, vec({1}))}, 1, cam);
    for (int r = 0; r < 64; ++r) {
        for (int c = 0; c < 64; ++c) {
            const double d = (pixel_center(r, c) - Vec2(32, 32)).norm();
            if (d > 8) {
                EXPECT_EQ(out.alpha.at(r, c, 0), 0.0);
            }
        }
    }
    // centre (32.5, 32.5): d^2 = 0.5, variance (50 * 0.05 / 2)^2 + 0.3
    EXPECT_NEAR(out.alpha.at(32, 32, 0), 0.9 * std::exp(-0.25 / 1.8625), 1e-12);
}

TEST(Render, MatchesReferenceBitExact) {
    const Camera cam = Camera::from_fov(1.2, 64, 64);
    for (int channels : {1, 3, 32}) {
        const auto gs = random_scene(100 + channels, 200, channels);
        const RenderOutput a = render(gs, channels, cam);
        const RenderOutput b = render_reference(gs, channels, cam);
        EXPECT_TRUE(a.features == b.features);
        EXPECT_TRUE(a.alpha == b.alpha);
    }
}

TEST(Render, IdenticalAcrossThreadCounts) {
    const Camera cam = Camera::from_fov(1.2, 64, 64);
    const auto gs = random_scene(77, 500, 3);
    set_num_threads(1);
    const RenderOutput one = render(gs, 3, cam);
    for (int t : {2, 8}) {
        set_num_threads(t);
        const RenderOutput many = render(gs, 3, cam);
        EXPECT_TRUE(one.features == many.features);
        EXPECT_TRUE(one.alpha == many.alpha);
    }
    set_num_threads(1);
}

TEST(Render, OneHotFeaturesStayInConvexHull) {
    const Camera cam = Camera::from_fov(1.2, 64, 64);
    auto gs = random_scene(9, 300, 4);
    std::vector<Gaussian> onehot;
    for (std::size_t i = 0; i < gs.size(); ++i) {
        VecX f = VecX::Zero(4);
        f[static_cast<Eigen::Index>(i % 4)] = 1.0;
        onehot.emplace_back(gs[i].mean(), gs[i].rotation(), gs[i].scale(), gs[i].opacity(), f);
    }
    const RenderOutput out = render(onehot, 4, cam);
    for (int r = 0; r < 64; ++r) {
        for (int c = 0; c < 64; ++c) {
            double sum = 0.0;
            for (double v : out.features.pixel(r, c)) {
                EXPECT_GE(v, 0.0);
                EXPECT_LE(v, 1.0);
                sum += v;
            }
            EXPECT_NEAR(sum, out.alpha.at(r, c, 0), 1e-12);
            EXPECT_GE(out.alpha.at(r, c, 0), 0.0);
            EXPECT_LE(out.alpha.at(r, c, 0), 1.0);
        }
    }
}

TEST(Render, AddingAGaussianNeverLowersAlpha) {
    const Camera cam = Camera::from_fov(1.2, 64, 64);
    auto gs = random_scene(21, 150, 1);
    const RenderOutput before = render(gs, 1, cam);
    gs.push_back(iso(Vec3(0.1, 0.1, 3.0), 0.3, 0.7, vec({0.5})));
    const RenderOutput after = render(gs, 1, cam);
    for (std::size_t i = 0; i < before.alpha.data().size(); ++i) {
        // cutoff truncation can hide at most the last 1e-4 of transmittance
        EXPECT_GE(after.alpha.data()[i], before.alpha.data()[i] - 1e-4);
    }
}

TEST(Render, RejectsChannelMismatch) {
    const Camera cam(50, 50, 32, 32, 64, 64);
    EXPECT_THROW(render(std::vector{iso(Vec3(0, 0, 2), 0.05, 0.9, vec({1, 2}))}, 1, cam), std::invalid_argument);
}

} // namespace
} // namespace snd
