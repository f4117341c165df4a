// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "snd/geometry.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace snd {

/// One context view: colour image, per-pixel depth (0 = background) and instance mask.
struct ContextView {
    FeatureMap image; // H x W x 3
    Camera camera;
    FeatureMap depth; // H x W x 1
    SemanticMask mask;

    void validate() const;
};

struct SourcePixel {
    int view = 0;
    int row = 0;
    int col = 0;

    friend bool operator==(const SourcePixel&, const SourcePixel&) = default;
};

/// Gaussians carrying features, each traced back to the context pixel it was lifted from.
struct FeatureScene {
    std::vector<Gaussian> gaussians;
    std::vector<SourcePixel> source;
    int channels = 1;
};

struct LiftSettings {
    double pixel_footprint_factor = 1.0; // sigma = factor * depth / fx
    double default_opacity = 0.8;
};

struct LiftedGeometry {
    std::vector<Gaussian> gaussians; // features empty until attach_features
    std::vector<SourcePixel> source;
};

/// One isotropic Gaussian per sampled foreground pixel, centred on the unprojected
/// pixel centre. With stride s the sampled pixels are (k*s + s/2) in each axis.
LiftedGeometry lift_geometry(std::span<const ContextView> views, int stride, const LiftSettings& settings = {});

enum class UpscaleRoute : std::uint8_t {
    kMasked,         // renormalised same-label bilinear weights
    kNearestLabel,   // no bilinear neighbour shares the label; copied nearest same-label point
    kPlainBilinear,  // nothing within the search radius; unrestricted bilinear
};

struct UpscaleTrace {
    std::vector<UpscaleRoute> route; // per high-res pixel, row-major
};

/// Bilinear weights of the four neighbours restricted to those sharing the query
/// label and renormalised to sum to 1; std::nullopt when none is kept.
std::optional<std::array<double, 4>> same_label_weights(const std::array<double, 4>& bilinear,
                                                        const std::array<bool, 4>& same_label);

/// Mask-guided upscaling: bilinear weights restricted to, and renormalised over,
/// the low-res neighbours whose label matches the high-res pixel's label. A low-res
/// point takes the label of the high-res pixel at (v * s + s / 2).
FeatureMap mask_aware_upscale(const FeatureMap& low, const SemanticMask& mask_high, UpscaleTrace* trace = nullptr);

/// Unrestricted bilinear upscaling by an integer factor (half-pixel centres, edge clamp).
FeatureMap bilinear_upscale(const FeatureMap& low, int factor);

/// Bilinear resampling to a smaller grid; each output pixel samples the input at its centre.
FeatureMap bilinear_downscale(const FeatureMap& high, int out_height, int out_width);

/// Sets each Gaussian's feature to high_maps[view] at its source pixel.
/// Throws std::out_of_range for a source record outside its map.
FeatureScene attach_features(LiftedGeometry geometry, std::span<const FeatureMap> high_maps);

/// Maximum Chebyshev radius (low-res points) searched by the no-same-label fallback.
inline constexpr int kUpscaleFallbackRadius = 4;

} // namespace snd
