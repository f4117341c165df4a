// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "snd/geometry.hpp"

namespace snd {

/// out(u) = a * F(u) + (1 - a) * mean of F over the pixels sharing u's label.
///
/// When `mean_weights` (H x W x 1, typically the rendered alpha) is given, the
/// region mean is weighted by it; a region whose weights sum to zero falls back
/// to the unweighted mean.
FeatureMap semantic_blend(const FeatureMap& rendered, const SemanticMask& mask, double alpha_blend,
                          const FeatureMap* mean_weights = nullptr);

} // namespace snd
