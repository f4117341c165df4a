// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "snd/geometry.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace snd::distill {

using Matrix = Eigen::MatrixXd;

/// Patch encoder: non-overlapping p x p patches -> linear embed -> residual
/// per-token MLP (GELU).
struct EncoderConfig {
    int image_size = 64;
    int patch_size = 8;
    int channels_in = 3;
    int embed_dim = 32;
    int hidden_dim = 64;

    int grid() const { return image_size / patch_size; }
    int tokens() const { return grid() * grid(); }
    int patch_dim() const { return patch_size * patch_size * channels_in; }
    void validate() const;

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// DINO-style head. Full-scale values: hidden 2048, bottleneck 256, 65536 prototypes.
struct HeadConfig {
    int layers = 3;
    int hidden = 64;
    int bottleneck = 16;
    int prototypes = 256;

    void validate() const;

    friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

struct Segment {
    std::string name;
    std::size_t offset = 0;
    int rows = 0;
    int cols = 0;

    std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
    friend bool operator==(const Segment&, const Segment&) = default;
};

/// Named partition of a flat parameter vector.
class ParamLayout {
public:
    ParamLayout(const EncoderConfig& encoder, const HeadConfig& head);

    const std::vector<Segment>& segments() const { return segments_; }
    const Segment& segment(std::string_view name) const;
    std::size_t total() const { return total_; }

    /// Name of the segment owning flat index `i`.
    const Segment& owner(std::size_t i) const;

    const EncoderConfig& encoder() const { return encoder_; }
    const HeadConfig& head() const { return head_; }

    bool is_head(const Segment& s) const { return s.name.starts_with("head."); }

    friend bool operator==(const ParamLayout& a, const ParamLayout& b) { return a.segments_ == b.segments_; }

private:
    void add(std::string name, int rows, int cols);

    EncoderConfig encoder_;
    HeadConfig head_;
    std::vector<Segment> segments_;
    std::size_t total_ = 0;
};

/// Flat parameter vector plus its (shared, immutable) layout.
class ModelParams {
public:
    ModelParams() = default;
    explicit ModelParams(std::shared_ptr<const ParamLayout> layout);

    const ParamLayout& layout() const { return *layout_; }
    std::shared_ptr<const ParamLayout> layout_ptr() const { return layout_; }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    Eigen::Map<Matrix> matrix(std::string_view name);
    Eigen::Map<const Matrix> matrix(std::string_view name) const;

    bool same_layout(const ModelParams& other) const;

    friend bool operator==(const ModelParams& a, const ModelParams& b) {
        return a.same_layout(b) && a.values_ == b.values_;
    }

private:
    std::shared_ptr<const ParamLayout> layout_;
    std::vector<double> values_;
};

/// Deterministic initialisation: weights ~ N(0, 1 / fan_in), biases 0,
/// prototypes ~ N(0, 1 / bottleneck).
ModelParams init_params(const EncoderConfig& encoder, const HeadConfig& head, std::uint64_t seed);

/// Per-pixel patch vectors, one column per token (row-major token order).
/// Colours are normalised as (x - 0.5) / 0.25.
Matrix extract_patches(const EncoderConfig& cfg, const FeatureMap& image);

/// Token matrix (C x T) <-> h x w x C feature map.
Matrix to_tokens(const FeatureMap& map);
FeatureMap from_tokens(const Matrix& tokens, int grid_h, int grid_w);

double gelu(double x);
double gelu_derivative(double x);

/// Intermediate activations kept for the backward pass.
struct EncoderCache {
    Matrix patches; // P x T
    Matrix embed;   // C x T
    Matrix pre;     // hidden x T
    Matrix act;     // hidden x T
    Matrix out;     // C x T
};

struct HeadCache {
    std::vector<Matrix> inputs; // input of each linear layer
    std::vector<Matrix> pre;    // pre-activation of each hidden layer
    Matrix bottleneck;          // B x T
    Eigen::RowVectorXd norms;   // per-token bottleneck norm
    Matrix normalized;          // B x T
    Matrix logits;              // K x T
};

EncoderCache encoder_forward(const ModelParams& params, const Matrix& patches);
HeadCache head_forward(const ModelParams& params, const Matrix& features);

/// Accumulates parameter gradients into `grad` (same layout as params) and
/// returns d loss / d features.
Matrix head_backward(const ModelParams& params, const HeadCache& cache, const Matrix& d_logits,
                     std::vector<double>& grad);
void encoder_backward(const ModelParams& params, const EncoderCache& cache, const Matrix& d_out,
                      std::vector<double>& grad);

/// h x w x C feature map of an H x W x 3 image.
FeatureMap encode(const ModelParams& params, const FeatureMap& image);

/// Prototype logits, one row per token.
Matrix head_logits(const ModelParams& params, const FeatureMap& features);

} // namespace snd::distill
