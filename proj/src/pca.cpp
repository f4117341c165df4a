// SPDX-License-Identifier: Apache-2.0
#include "snd/pca.hpp"

#include "snd/io.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace snd {

PcaImage pca_rgb(const FeatureMap& features) {
    if (features.channels() < 3) {
        throw std::invalid_argument("pca: need at least 3 channels, got " + std::to_string(features.channels()));
    }
    const auto n = static_cast<Eigen::Index>(features.pixels());
    const Eigen::Index c = features.channels();
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
        features.data().data(), n, c);

    PcaImage img{features.width(), features.height(), std::vector<std::uint8_t>(static_cast<std::size_t>(n) * 3, 128)};
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n);
    const double scale = cov.diagonal().cwiseAbs().maxCoeff();
    if (!(scale > 1e-24)) {
        return img;
    }

    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::VectorXd& values = eig.eigenvalues(); // ascending
    for (int k = 0; k < 3; ++k) {
        const Eigen::Index idx = c - 1 - k;
        Eigen::VectorXd axis = eig.eigenvectors().col(idx);
        Eigen::Index arg = 0;
        axis.cwiseAbs().maxCoeff(&arg);
        if (axis[arg] < 0.0) {
            axis = -axis;
        }
        const Eigen::VectorXd proj = centered * axis;
        const double lo = proj.minCoeff();
        const double hi = proj.maxCoeff();
        const bool flat = values[idx] <= 1e-12 * scale || !(hi - lo > 0.0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = flat ? 0.0 : std::round(255.0 * (proj[i] - lo) / (hi - lo));
            img.rgb[static_cast<std::size_t>(i) * 3 + k] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
        }
    }
    return img;
}

void pca_visualize(const FeatureMap& features, const std::filesystem::path& png_path) {
    const PcaImage img = pca_rgb(features);
    write_png(png_path, img.width, img.height, img.rgb);
}

} // namespace snd
