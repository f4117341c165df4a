// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "snd/geometry.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

namespace snd::metrics {

struct ProbeReport {
    std::string task;
    std::string metric;
    double value = 0.0;
    std::int64_t num_samples = 0;
    std::uint64_t seed = 0;

    void validate() const;
    friend bool operator==(const ProbeReport&, const ProbeReport&) = default;
};

struct CorrespondenceResult {
    double recall = 0.0;
    std::int64_t queries = 0;      // valid patches of A that reproject into B
    std::int64_t passed_ratio = 0; // matches surviving the ratio test
    std::int64_t hits = 0;         // surviving matches within the pixel threshold
    bool no_queries = false;
};

struct CorrespondenceSettings {
    double ratio = 0.9;
    double min_valid_fraction = 0.5; // foreground share needed for a patch to be queried
};

/// Nearest-neighbour matching of A's patch features against B's by cosine
/// similarity with a 2-NN ratio test. Each queried patch centre is lifted with
/// its mean ground-truth depth, reprojected into B, and counted as a hit when
/// the matched patch centre lies within `threshold_px`. recall = hits / queries.
CorrespondenceResult correspondence_recall(const FeatureMap& feats_a, const FeatureMap& feats_b,
                                           const FeatureMap& depth_a, const Camera& cam_a, const Camera& cam_b,
                                           double threshold_px, const CorrespondenceSettings& settings = {});

struct DepthProbeResult {
    double rmse = 0.0;
    double abs_rel = 0.0;
    std::int64_t num_test = 0;
};

/// Closed-form ridge regression with an unregularised intercept, minimising
/// mean squared error + lambda * |w|^2. Rows of x are samples. Requires lambda > 0.
DepthProbeResult depth_probe(const Eigen::MatrixXd& train_x, const Eigen::VectorXd& train_y,
                             const Eigen::MatrixXd& test_x, const Eigen::VectorXd& test_y, double ridge_lambda);

struct SegmentationProbeResult {
    double accuracy = 0.0;
    double mean_iou = 0.0;
    std::int64_t num_test = 0;
    std::vector<int> excluded_classes; // present in test but absent from training
    int iterations = 0;
};

struct SegmentationSettings {
    double l2_reg = 1e-3;
    double tolerance = 1e-6; // on the gradient norm
    int max_iterations = 3000;
};

/// Multinomial logistic regression on standardised features, trained by
/// full-batch accelerated gradient descent.
SegmentationProbeResult segmentation_probe(const Eigen::MatrixXd& train_x, const std::vector<int>& train_labels,
                                           const Eigen::MatrixXd& test_x, const std::vector<int>& test_labels,
                                           const SegmentationSettings& settings = {});

} // namespace snd::metrics
