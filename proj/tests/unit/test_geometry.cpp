// SPDX-License-Identifier: Apache-2.0
#include "snd/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

namespace snd {
namespace {

Eigen::Quaterniond about_z(double angle) { return Eigen::Quaterniond(Eigen::AngleAxisd(angle, Vec3::UnitZ())); }

TEST(Covariance, IsotropicUnitIsIdentity) {
    const Gaussian g(Vec3::Zero(), Eigen::Quaterniond::Identity(), Vec3::Ones(), 0.5);
    EXPECT_TRUE(covariance_of(g).isApprox(Mat3::Identity(), 1e-15));
}

TEST(Covariance, AxisAlignedScale) {
    const Gaussian g(Vec3::Zero(), Eigen::Quaterniond::Identity(), Vec3(2, 1, 1), 0.5);
    EXPECT_TRUE(covariance_of(g).isApprox(Vec3(4, 1, 1).asDiagonal().toDenseMatrix(), 1e-15));
}

TEST(Covariance, QuarterTurnAboutZSwapsAxes) {
    const Gaussian g(Vec3::Zero(), about_z(std::numbers::pi / 2), Vec3(2, 1, 1), 0.5);
    const Mat3 cov = covariance_of(g);
    const Mat3 expected = Vec3(1, 4, 1).asDiagonal();
    EXPECT_LT((cov - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Covariance, EigenvaluesAreSquaredScales) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-1, 1), s(0.1, 3.0);
    for (int i = 0; i < 100; ++i) {
        const Vec3 scale(s(rng), s(rng), s(rng));
        const Gaussian g(Vec3::Zero(), Eigen::Quaterniond(u(rng), u(rng), u(rng), u(rng)), scale, 1.0);
        Eigen::SelfAdjointEigenSolver<Mat3> eig(covariance_of(g));
        Vec3 want = scale.cwiseProduct(scale);
        std::sort(want.data(), want.data() + 3);
        EXPECT_LT((eig.eigenvalues() - want).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(GaussianValidation, QuaternionIsNormalised) {
    const Gaussian g(Vec3::Zero(), Eigen::Quaterniond(2, 0, 0, 0), Vec3::Ones(), 0.5);
    EXPECT_NEAR(g.rotation().norm(), 1.0, 1e-9);
}

TEST(GaussianValidation, RejectsBadParameters) {
    EXPECT_THROW(Gaussian(Vec3::Zero(), Eigen::Quaterniond::Identity(), Vec3(1, 0, 1), 0.5), std::invalid_argument);
    EXPECT_THROW(Gaussian(Vec3::Zero(), Eigen::Quaterniond::Identity(), Vec3::Ones(), 1.5), std::invalid_argument);
    EXPECT_THROW(Gaussian(Vec3::Zero(), Eigen::Quaterniond(0, 0, 0, 0), Vec3::Ones(), 0.5), std::invalid_argument);
    EXPECT_THROW(Gaussian(Vec3(NAN, 0, 0), Eigen::Quaterniond::Identity(), Vec3::Ones(), 0.5), std::invalid_argument);
}

TEST(Projection, OpticalAxis) {
    const Camera cam(1, 1, 0, 0, 4, 4);
    const auto p = project_point(cam, Vec3(0, 0, 1));
    ASSERT_TRUE(p);
    EXPECT_EQ(p->pixel, Vec2(0, 0));
    EXPECT_EQ(p->depth, 1.0);
}

TEST(Projection, OffAxisExample) {
    const Camera cam(100, 100, 32, 32, 64, 64);
    const auto p = project_point(cam, Vec3(0.1, 0, 1));
    ASSERT_TRUE(p);
    EXPECT_NEAR(p->pixel.x(), 42.0, 1e-12);
    EXPECT_NEAR(p->pixel.y(), 32.0, 1e-12);
    EXPECT_EQ(p->depth, 1.0);
}

TEST(Projection, BehindCameraIsFlagged) {
    const Camera cam(100, 100, 32, 32, 64, 64);
    EXPECT_FALSE(project_point(cam, Vec3(0.1, 0, 0)));
    EXPECT_FALSE(project_point(cam, Vec3(0, 0, -1)));
    EXPECT_FALSE(project_point(cam, Vec3(0, 0, kDepthEpsilon)));
}

TEST(Unprojection, PrincipalPointLiesOnAxis) {
    const Camera cam(80, 90, 31.5, 30.0, 64, 64);
    const Vec3 p = unproject_pixel(cam, Vec2(31.5, 30.0), 2.5);
    EXPECT_LT((p - Vec3(0, 0, 2.5)).norm(), 1e-15);
    EXPECT_THROW(unproject_pixel(cam, Vec2(1, 1), 0.0), std::invalid_argument);
    EXPECT_THROW(unproject_pixel(cam, Vec2(1, 1), -1.0), std::invalid_argument);
}

TEST(Unprojection, RoundTripRandomDraws) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1, 1), px(0, 64), d(0.01, 50);
    for (int i = 0; i < 1000; ++i) {
        const RigidTransform pose =
            RigidTransform::look_at(Vec3(3 * u(rng), 3 * u(rng), 3 * u(rng)), Vec3(u(rng), u(rng), u(rng)) * 0.1 +
                                                                                    Vec3(0, 0, 10),
                                    Vec3::UnitZ());
        const Camera cam(40 + 20 * u(rng), 40 + 20 * u(rng), 32 + u(rng), 32 + u(rng), 64, 64, pose);
        const Vec2 pixel(px(rng), px(rng));
        const double depth = d(rng);
        const auto back = project_point(cam, unproject_pixel(cam, pixel, depth));
        ASSERT_TRUE(back);
        EXPECT_LT((back->pixel - pixel).norm(), 1e-9 * std::max(1.0, pixel.norm()));
        EXPECT_LT(std::abs(back->depth - depth), 1e-9 * depth);
    }
}

TEST(RigidTransformTest, ComposeIsAssociative) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    auto random_pose = [&] {
        RigidTransform t;
        t.rotation = Eigen::Quaterniond(u(rng), u(rng), u(rng), u(rng)).normalized().toRotationMatrix();
        t.translation = Vec3(u(rng), u(rng), u(rng)) * 5;
        return t;
    };
    for (int i = 0; i < 100; ++i) {
        const RigidTransform a = random_pose(), b = random_pose(), c = random_pose();
        const RigidTransform l = (a * b) * c, r = a * (b * c);
        EXPECT_LT((l.rotation - r.rotation).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_LT((l.translation - r.translation).cwiseAbs().maxCoeff(), 1e-12);
        const Vec3 p(u(rng), u(rng), u(rng));
        EXPECT_LT((a.inverse().apply(a.apply(p)) - p).norm(), 1e-12);
    }
}

TEST(RigidTransformTest, ValidateRejectsReflection) {
    RigidTransform t;
    t.rotation = Vec3(1, 1, -1).asDiagonal();
    EXPECT_THROW(t.validate(), std::invalid_argument);
    EXPECT_THROW(Camera(10, 10, 5, 5, 10, 10, t), std::invalid_argument);
}

TEST(CameraTest, RejectsBadIntrinsics) {
    EXPECT_THROW(Camera(0, 10, 5, 5, 10, 10), std::invalid_argument);
    EXPECT_THROW(Camera(10, 10, 5, 5, 0, 10), std::invalid_argument);
}

TEST(CameraTest, LookAtPointsForward) {
    const RigidTransform pose = RigidTransform::look_at(Vec3(1, 2, 3), Vec3(4, 2, 3), Vec3::UnitZ());
    const Camera cam = Camera::from_fov(1.0, 64, 64, pose);
    EXPECT_LT((cam.center() - Vec3(1, 2, 3)).norm(), 1e-12);
    const auto p = project_point(cam, Vec3(4, 2, 3));
    ASSERT_TRUE(p);
    EXPECT_NEAR(p->pixel.x(), 32.0, 1e-9);
    EXPECT_NEAR(p->pixel.y(), 32.0, 1e-9);
    EXPECT_NEAR(p->depth, 3.0, 1e-12);
    // world up maps to image up (negative y)
    const auto up = project_point(cam, Vec3(4, 2, 4));
    ASSERT_TRUE(up);
    EXPECT_LT(up->pixel.y(), 32.0);
}

TEST(PixelConvention, CentresAreHalfIntegers) {
    EXPECT_EQ(pixel_center(0, 0), Vec2(0.5, 0.5));
    EXPECT_EQ(pixel_center(3, 7), Vec2(7.5, 3.5));
}

TEST(FeatureMapTest, LayoutAndValidation) {
    FeatureMap m(2, 3, 4);
    m.at(1, 2, 3) = 5.0;
    EXPECT_EQ(m.data()[(1 * 3 + 2) * 4 + 3], 5.0);
    EXPECT_EQ(m.pixel(1, 2)[3], 5.0);
    EXPECT_THROW(FeatureMap(2, 2, 1, std::vector<double>(3)), std::invalid_argument);
    EXPECT_THROW(FeatureMap(2, 2, 1, std::vector<double>{0, 1, NAN, 2}), std::invalid_argument);
    EXPECT_THROW(SemanticMask(2, 2, std::vector<Label>(5)), std::invalid_argument);
}

} // namespace
} // namespace snd
