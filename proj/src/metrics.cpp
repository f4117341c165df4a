// SPDX-License-Identifier: Apache-2.0
#include "snd/metrics.hpp"

#include "snd/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <stdexcept>

namespace snd::metrics {

void ProbeReport::validate() const {
    if (!std::isfinite(value)) {
        throw std::invalid_argument("ProbeReport: value is not finite");
    }
    if (num_samples <= 0) {
        throw std::invalid_argument("ProbeReport: num_samples must be positive");
    }
}

CorrespondenceResult correspondence_recall(const FeatureMap& feats_a, const FeatureMap& feats_b,
                                           const FeatureMap& depth_a, const Camera& cam_a, const Camera& cam_b,
                                           double threshold_px, const CorrespondenceSettings& settings) {
    if (!(threshold_px > 0.0)) {
        throw std::invalid_argument("correspondence_recall: threshold must be positive");
    }
    if (feats_a.channels() != feats_b.channels()) {
        throw std::invalid_argument("correspondence_recall: feature maps disagree on channels");
    }
    if (depth_a.height() != cam_a.height() || depth_a.width() != cam_a.width() || depth_a.channels() != 1) {
        throw std::invalid_argument("correspondence_recall: depth map must match camera A");
    }
    if (cam_a.height() % feats_a.height() != 0 || cam_a.width() % feats_a.width() != 0 ||
        cam_b.height() % feats_b.height() != 0 || cam_b.width() % feats_b.width() != 0) {
        throw std::invalid_argument("correspondence_recall: feature grid must tile the image");
    }
    const int pa_y = cam_a.height() / feats_a.height();
    const int pa_x = cam_a.width() / feats_a.width();
    const int pb_y = cam_b.height() / feats_b.height();
    const int pb_x = cam_b.width() / feats_b.width();

    // unit-normalised B features, one column per patch
    const int nb = static_cast<int>(feats_b.pixels());
    Eigen::MatrixXd bank(feats_b.channels(), nb);
    for (int r = 0; r < feats_b.height(); ++r) {
        for (int c = 0; c < feats_b.width(); ++c) {
            const auto f = feats_b.pixel(r, c);
            Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(f.data(), feats_b.channels());
            const double n = v.norm();
            bank.col(r * feats_b.width() + c) = n > 0.0 ? Eigen::VectorXd(v / n) : Eigen::VectorXd::Zero(v.size());
        }
    }

    const int na = static_cast<int>(feats_a.pixels());
    std::vector<std::int8_t> queried(na, 0), passed(na, 0), hit(na, 0);
    parallel_for(static_cast<std::size_t>(na), [&](std::size_t begin, std::size_t end) {
        for (std::size_t q = begin; q < end; ++q) {
            const int r = static_cast<int>(q) / feats_a.width();
            const int c = static_cast<int>(q) % feats_a.width();
            double sum = 0.0;
            int valid = 0;
            for (int y = r * pa_y; y < (r + 1) * pa_y; ++y) {
                for (int x = c * pa_x; x < (c + 1) * pa_x; ++x) {
                    const double d = depth_a.at(y, x, 0);
                    if (d > 0.0) {
                        sum += d;
                        ++valid;
                    }
                }
            }
            if (valid == 0 || valid < settings.min_valid_fraction * pa_x * pa_y) {
                continue;
            }
            const Vec2 center((c + 0.5) * pa_x, (r + 0.5) * pa_y);
            const auto proj = project_point(cam_b, unproject_pixel(cam_a, center, sum / valid));
            if (!proj || proj->pixel.x() < 0.0 || proj->pixel.y() < 0.0 || proj->pixel.x() >= cam_b.width() ||
                proj->pixel.y() >= cam_b.height()) {
                continue;
            }
            queried[q] = 1;

            const auto f = feats_a.pixel(r, c);
            Eigen::VectorXd v = Eigen::Map<const Eigen::VectorXd>(f.data(), feats_a.channels());
            const double n = v.norm();
            if (n > 0.0) {
                v /= n;
            }
            const Eigen::VectorXd sims = bank.transpose() * v;
            int best = -1;
            double d1 = std::numeric_limits<double>::infinity();
            double d2 = std::numeric_limits<double>::infinity();
            for (int k = 0; k < nb; ++k) {
                const double d = std::sqrt(std::max(0.0, 2.0 - 2.0 * sims(k)));
                if (d < d1) {
                    d2 = d1;
                    d1 = d;
                    best = k;
                } else if (d < d2) {
                    d2 = d;
                }
            }
            const bool ok = nb == 1 ? true : d1 < settings.ratio * d2;
            if (!ok) {
                continue;
            }
            passed[q] = 1;
            const Vec2 matched(((best % feats_b.width()) + 0.5) * pb_x, ((best / feats_b.width()) + 0.5) * pb_y);
            if ((matched - proj->pixel).norm() <= threshold_px) {
                hit[q] = 1;
            }
        }
    });

    CorrespondenceResult out;
    for (int q = 0; q < na; ++q) {
        out.queries += queried[q];
        out.passed_ratio += passed[q];
        out.hits += hit[q];
    }
    out.no_queries = out.queries == 0;
    out.recall = out.no_queries ? 0.0 : static_cast<double>(out.hits) / static_cast<double>(out.queries);
    return out;
}

DepthProbeResult depth_probe(const Eigen::MatrixXd& train_x, const Eigen::VectorXd& train_y,
                             const Eigen::MatrixXd& test_x, const Eigen::VectorXd& test_y, double ridge_lambda) {
    if (!(ridge_lambda > 0.0)) {
        throw std::invalid_argument("depth_probe: ridge lambda must be positive");
    }
    if (train_x.rows() != train_y.size() || test_x.rows() != test_y.size() || train_x.cols() != test_x.cols()) {
        throw std::invalid_argument("depth_probe: inconsistent shapes");
    }
    if (train_x.rows() == 0 || test_x.rows() == 0) {
        throw std::invalid_argument("depth_probe: empty train or test set");
    }
    const double n = static_cast<double>(train_x.rows());
    const Eigen::RowVectorXd mean_x = train_x.colwise().mean();
    const double mean_y = train_y.mean();
    const Eigen::MatrixXd xc = train_x.rowwise() - mean_x;
    const Eigen::VectorXd yc = train_y.array() - mean_y;

    Eigen::MatrixXd gram = xc.transpose() * xc / n;
    gram.diagonal().array() += ridge_lambda;
    const Eigen::VectorXd w = gram.ldlt().solve(xc.transpose() * yc / n);

    const Eigen::VectorXd pred = ((test_x.rowwise() - mean_x) * w).array() + mean_y;
    DepthProbeResult out;
    out.num_test = test_y.size();
    out.rmse = std::sqrt((pred - test_y).squaredNorm() / static_cast<double>(test_y.size()));
    out.abs_rel = ((pred - test_y).array().abs() / test_y.array()).mean();
    return out;
}

SegmentationProbeResult segmentation_probe(const Eigen::MatrixXd& train_x, const std::vector<int>& train_labels,
                                           const Eigen::MatrixXd& test_x, const std::vector<int>& test_labels,
                                           const SegmentationSettings& settings) {
    if (train_x.rows() != static_cast<Eigen::Index>(train_labels.size()) ||
        test_x.rows() != static_cast<Eigen::Index>(test_labels.size()) || train_x.cols() != test_x.cols()) {
        throw std::invalid_argument("segmentation_probe: inconsistent shapes");
    }
    if (train_labels.empty() || test_labels.empty()) {
        throw std::invalid_argument("segmentation_probe: empty train or test set");
    }

    std::map<int, int> class_index;
    for (int l : train_labels) {
        class_index.emplace(l, 0);
    }
    std::vector<int> classes;
    for (auto& [label, idx] : class_index) {
        idx = static_cast<int>(classes.size());
        classes.push_back(label);
    }
    const int k = static_cast<int>(classes.size());
    const Eigen::Index n = train_x.rows();
    const Eigen::Index d = train_x.cols();

    // standardise with training statistics; bias as an extra constant column
    const Eigen::RowVectorXd mean = train_x.colwise().mean();
    Eigen::RowVectorXd stddev = ((train_x.rowwise() - mean).array().square().colwise().mean()).sqrt();
    for (Eigen::Index j = 0; j < d; ++j) {
        if (!(stddev(j) > 1e-12)) {
            stddev(j) = 1.0;
        }
    }
    auto design = [&](const Eigen::MatrixXd& x) {
        Eigen::MatrixXd z(x.rows(), d + 1);
        z.leftCols(d) = (x.rowwise() - mean).array().rowwise() / stddev.array();
        z.col(d).setOnes();
        return z;
    };
    const Eigen::MatrixXd z = design(train_x);
    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
        onehot(i, class_index.at(train_labels[i])) = 1.0;
    }

    SegmentationProbeResult out;
    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(d + 1, k);
    if (k > 1) {
        Eigen::VectorXd reg_mask = Eigen::VectorXd::Ones(d + 1);
        reg_mask(d) = 0.0;
        auto gradient = [&](const Eigen::MatrixXd& weights) {
            Eigen::MatrixXd logits = z * weights;
            for (Eigen::Index i = 0; i < n; ++i) {
                const double peak = logits.row(i).maxCoeff();
                logits.row(i) = (logits.row(i).array() - peak).exp();
                logits.row(i) /= logits.row(i).sum();
            }
            Eigen::MatrixXd g = z.transpose() * (logits - onehot) / static_cast<double>(n);
            g += settings.l2_reg * (reg_mask.asDiagonal() * weights);
            return g;
        };
        // softmax cross-entropy Hessian is bounded by 0.5 * Z^T Z / n
        const Eigen::MatrixXd zz = z.transpose() * z / static_cast<double>(n);
        const double lipschitz = 0.5 * Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(zz, Eigen::EigenvaluesOnly)
                                           .eigenvalues()
                                           .maxCoeff() +
                                 settings.l2_reg;
        const double step = 1.0 / lipschitz;
        Eigen::MatrixXd prev = w;
        double t = 1.0;
        for (int it = 0; it < settings.max_iterations; ++it) {
            const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
            const Eigen::MatrixXd look = w + ((t - 1.0) / t_next) * (w - prev);
            const Eigen::MatrixXd g = gradient(look);
            prev = w;
            w = look - step * g;
            t = t_next;
            out.iterations = it + 1;
            if (g.norm() < settings.tolerance) {
                break;
            }
        }
    }

    const Eigen::MatrixXd test_logits = design(test_x) * w;
    std::map<int, std::int64_t> tp, fp, fn;
    std::int64_t correct = 0;
    for (Eigen::Index i = 0; i < test_logits.rows(); ++i) {
        Eigen::Index arg = 0;
        test_logits.row(i).maxCoeff(&arg);
        const int pred = classes[static_cast<std::size_t>(arg)];
        const int truth = test_labels[static_cast<std::size_t>(i)];
        if (pred == truth) {
            ++correct;
            ++tp[truth];
        } else {
            ++fp[pred];
            ++fn[truth];
        }
    }
    out.num_test = static_cast<std::int64_t>(test_labels.size());
    out.accuracy = static_cast<double>(correct) / static_cast<double>(out.num_test);

    std::map<int, int> present;
    for (int l : test_labels) {
        present.emplace(l, 0);
    }
    double iou_sum = 0.0;
    int iou_count = 0;
    for (const auto& [label, unused] : present) {
        if (!class_index.contains(label)) {
            out.excluded_classes.push_back(label);
            std::cerr << "segmentation_probe: class " << label << " absent from training; excluded from mIoU\n";
            continue;
        }
        const double denom = static_cast<double>(tp[label] + fp[label] + fn[label]);
        iou_sum += denom > 0.0 ? static_cast<double>(tp[label]) / denom : 0.0;
        ++iou_count;
    }
    out.mean_iou = iou_count > 0 ? iou_sum / iou_count : 0.0;
    return out;
}

} // namespace snd::metrics
