// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "snd/geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace snd {

struct PcaImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb; // row-major, 3 bytes per pixel
};

/// Projects each pixel onto the top three principal components, each flipped so
/// its largest-magnitude loading is positive and min-max scaled to [0, 255].
/// A component without variance maps to 0; input without any variance maps to
/// uniform gray. Requires at least 3 channels.
PcaImage pca_rgb(const FeatureMap& features);

void pca_visualize(const FeatureMap& features, const std::filesystem::path& png_path);

} // namespace snd
