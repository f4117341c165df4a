// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace snd {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;

/// Points closer than this to the camera plane are treated as behind the camera.
inline constexpr double kDepthEpsilon = 1e-6;

using Label = std::uint32_t;

/// Rigid transform x' = R x + t.
struct RigidTransform {
    Mat3 rotation = Mat3::Identity();
    Vec3 translation = Vec3::Zero();

    static RigidTransform identity() { return {}; }

    /// Throws std::invalid_argument unless R is orthonormal with det +1 (1e-9).
    void validate() const;

    Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
    RigidTransform inverse() const;
    /// (a * b).apply(p) == a.apply(b.apply(p)).
    RigidTransform operator*(const RigidTransform& rhs) const;

    /// Camera pose looking from `eye` toward `target` (OpenCV axes: x right, y down, z forward).
    static RigidTransform look_at(const Vec3& eye, const Vec3& target, const Vec3& world_up);
};

/// One 3D primitive. Spherical-harmonic colour is intentionally absent; appearance
/// lives in `feature`.
class Gaussian {
public:
    Gaussian(Vec3 mean, Eigen::Quaterniond rotation, Vec3 scale, double opacity,
             VecX feature = {}, Label label = 0);

    const Vec3& mean() const { return mean_; }
    const Eigen::Quaterniond& rotation() const { return rotation_; }
    const Vec3& scale() const { return scale_; }
    double opacity() const { return opacity_; }
    const VecX& feature() const { return feature_; }
    Label label() const { return label_; }

    void set_feature(VecX f) { feature_ = std::move(f); }

private:
    Vec3 mean_;
    Eigen::Quaterniond rotation_;
    Vec3 scale_;
    double opacity_;
    VecX feature_;
    Label label_;
};

/// R diag(scale^2) R^T.
Mat3 covariance_of(const Gaussian& g);

class Camera {
public:
    Camera(double fx, double fy, double cx, double cy, int width, int height,
           RigidTransform world_to_camera = {});

    /// Square-pixel camera with principal point at the image centre.
    static Camera from_fov(double horizontal_fov_rad, int width, int height,
                           RigidTransform world_to_camera = {});

    double fx() const { return fx_; }
    double fy() const { return fy_; }
    double cx() const { return cx_; }
    double cy() const { return cy_; }
    int width() const { return width_; }
    int height() const { return height_; }
    const RigidTransform& pose() const { return pose_; }

    /// Camera centre in world coordinates.
    Vec3 center() const;

private:
    double fx_, fy_, cx_, cy_;
    int width_, height_;
    RigidTransform pose_;
};

struct Projection {
    Vec2 pixel;   // continuous pixel coordinates; pixel (i, j) has its centre at (j + 0.5, i + 0.5)
    double depth; // camera-frame z
};

/// Returns std::nullopt when the point is behind the camera (z <= kDepthEpsilon).
std::optional<Projection> project_point(const Camera& cam, const Vec3& p);

/// Inverse of project_point. Throws std::invalid_argument for depth <= 0.
Vec3 unproject_pixel(const Camera& cam, const Vec2& pixel, double depth);

/// Continuous coordinates of the centre of pixel (row, col).
inline Vec2 pixel_center(int row, int col) { return {col + 0.5, row + 0.5}; }

/// Dense h x w x C grid, row-major, channels innermost.
class FeatureMap {
public:
    FeatureMap() = default;
    FeatureMap(int height, int width, int channels, double fill = 0.0);
    FeatureMap(int height, int width, int channels, std::vector<double> data);

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    std::size_t pixels() const { return static_cast<std::size_t>(height_) * width_; }
    bool empty() const { return data_.empty(); }

    double& at(int row, int col, int ch) { return data_[index(row, col) + ch]; }
    double at(int row, int col, int ch) const { return data_[index(row, col) + ch]; }

    std::span<double> pixel(int row, int col) {
        return {data_.data() + index(row, col), static_cast<std::size_t>(channels_)};
    }
    std::span<const double> pixel(int row, int col) const {
        return {data_.data() + index(row, col), static_cast<std::size_t>(channels_)};
    }

    const std::vector<double>& data() const { return data_; }
    std::vector<double>& data() { return data_; }

    bool all_finite() const;

    friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

private:
    std::size_t index(int row, int col) const {
        return (static_cast<std::size_t>(row) * width_ + col) * channels_;
    }

    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    std::vector<double> data_;
};

class SemanticMask {
public:
    SemanticMask() = default;
    SemanticMask(int height, int width, Label fill = 0);
    SemanticMask(int height, int width, std::vector<Label> labels);

    int height() const { return height_; }
    int width() const { return width_; }

    Label& at(int row, int col) { return labels_[static_cast<std::size_t>(row) * width_ + col]; }
    Label at(int row, int col) const { return labels_[static_cast<std::size_t>(row) * width_ + col]; }

    const std::vector<Label>& labels() const { return labels_; }

    friend bool operator==(const SemanticMask&, const SemanticMask&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    std::vector<Label> labels_;
};

} // namespace snd
