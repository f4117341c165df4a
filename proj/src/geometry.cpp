// SPDX-License-Identifier: Apache-2.0
#include "snd/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace snd {

void RigidTransform::validate() const {
    const Mat3 gram = rotation.transpose() * rotation;
    if (!gram.allFinite() || (gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9) {
        throw std::invalid_argument("pose rotation is not orthonormal");
    }
    if (std::abs(rotation.determinant() - 1.0) > 1e-9) {
        throw std::invalid_argument("pose rotation determinant is not +1");
    }
    if (!translation.allFinite()) {
        throw std::invalid_argument("pose translation is not finite");
    }
}

RigidTransform RigidTransform::inverse() const {
    RigidTransform inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
    RigidTransform out;
    out.rotation = rotation * rhs.rotation;
    out.translation = rotation * rhs.translation + translation;
    return out;
}

RigidTransform RigidTransform::look_at(const Vec3& eye, const Vec3& target, const Vec3& world_up) {
    const Vec3 forward = (target - eye).normalized();
    Vec3 right = forward.cross(world_up);
    if (right.norm() < 1e-12) {
        throw std::invalid_argument("look_at: view direction parallel to up vector");
    }
    right.normalize();
    const Vec3 down = forward.cross(right);

    RigidTransform pose;
    pose.rotation.row(0) = right.transpose();
    pose.rotation.row(1) = down.transpose();
    pose.rotation.row(2) = forward.transpose();
    pose.translation = -(pose.rotation * eye);
    return pose;
}

Gaussian::Gaussian(Vec3 mean, Eigen::Quaterniond rotation, Vec3 scale, double opacity,
                   VecX feature, Label label)
    : mean_(std::move(mean)), rotation_(rotation), scale_(std::move(scale)), opacity_(opacity),
      feature_(std::move(feature)), label_(label) {
    const double n = rotation_.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw std::invalid_argument("Gaussian: degenerate rotation quaternion");
    }
    if (std::abs(n - 1.0) > 1e-12) {
        rotation_.coeffs() /= n;
    }
    if (!(scale_.array() > 0.0).all() || !scale_.allFinite()) {
        throw std::invalid_argument("Gaussian: scale components must be positive");
    }
    if (!(opacity_ >= 0.0 && opacity_ <= 1.0)) {
        throw std::invalid_argument("Gaussian: opacity outside [0, 1]");
    }
    if (!mean_.allFinite()) {
        throw std::invalid_argument("Gaussian: mean is not finite");
    }
}

Mat3 covariance_of(const Gaussian& g) {
    const Mat3 r = g.rotation().toRotationMatrix();
    const Vec3 var = g.scale().cwiseProduct(g.scale());
    Mat3 cov = r * var.asDiagonal() * r.transpose();
    // exact symmetry
    cov = 0.5 * (cov + cov.transpose()).eval();
    return cov;
}

Camera::Camera(double fx, double fy, double cx, double cy, int width, int height,
               RigidTransform world_to_camera)
    : fx_(fx), fy_(fy), cx_(cx), cy_(cy), width_(width), height_(height),
      pose_(std::move(world_to_camera)) {
    if (!(fx_ > 0.0) || !(fy_ > 0.0)) {
        throw std::invalid_argument("Camera: focal lengths must be positive");
    }
    if (width_ < 1 || height_ < 1) {
        throw std::invalid_argument("Camera: image size must be at least 1x1");
    }
    pose_.validate();
}

Camera Camera::from_fov(double horizontal_fov_rad, int width, int height,
                        RigidTransform world_to_camera) {
    const double f = 0.5 * width / std::tan(0.5 * horizontal_fov_rad);
    return {f, f, 0.5 * width, 0.5 * height, width, height, std::move(world_to_camera)};
}

Vec3 Camera::center() const { return pose_.inverse().translation; }

std::optional<Projection> project_point(const Camera& cam, const Vec3& p) {
    const Vec3 pc = cam.pose().apply(p);
    if (pc.z() <= kDepthEpsilon) {
        return std::nullopt;
    }
    return Projection{{cam.fx() * pc.x() / pc.z() + cam.cx(), cam.fy() * pc.y() / pc.z() + cam.cy()},
                      pc.z()};
}

Vec3 unproject_pixel(const Camera& cam, const Vec2& pixel, double depth) {
    if (!(depth > 0.0)) {
        throw std::invalid_argument("unproject_pixel: depth must be positive, got " + std::to_string(depth));
    }
    const Vec3 pc{(pixel.x() - cam.cx()) / cam.fx() * depth, (pixel.y() - cam.cy()) / cam.fy() * depth, depth};
    const RigidTransform& pose = cam.pose();
    return pose.rotation.transpose() * (pc - pose.translation);
}

FeatureMap::FeatureMap(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
    if (height < 1 || width < 1 || channels < 1) {
        throw std::invalid_argument("FeatureMap: dimensions must be positive");
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

FeatureMap::FeatureMap(int height, int width, int channels, std::vector<double> data)
    : height_(height), width_(width), channels_(channels), data_(std::move(data)) {
    if (height < 1 || width < 1 || channels < 1) {
        throw std::invalid_argument("FeatureMap: dimensions must be positive");
    }
    if (data_.size() != static_cast<std::size_t>(height) * width * channels) {
        throw std::invalid_argument("FeatureMap: data length does not match height*width*channels");
    }
    if (!all_finite()) {
        throw std::invalid_argument("FeatureMap: non-finite entry");
    }
}

bool FeatureMap::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

SemanticMask::SemanticMask(int height, int width, Label fill) : height_(height), width_(width) {
    if (height < 1 || width < 1) {
        throw std::invalid_argument("SemanticMask: dimensions must be positive");
    }
    labels_.assign(static_cast<std::size_t>(height) * width, fill);
}

SemanticMask::SemanticMask(int height, int width, std::vector<Label> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
    if (height < 1 || width < 1) {
        throw std::invalid_argument("SemanticMask: dimensions must be positive");
    }
    if (labels_.size() != static_cast<std::size_t>(height) * width) {
        throw std::invalid_argument("SemanticMask: label count does not match height*width");
    }
}

} // namespace snd
