// SPDX-License-Identifier: Apache-2.0
#include "snd/model.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace snd::distill {
namespace {

constexpr double kNormEps = 1e-12;
const double kGeluScale = std::sqrt(2.0 / std::numbers::pi);
constexpr double kGeluCubic = 0.044715;

std::string layer_name(int l, const char* part) {
    return "head.layer" + std::to_string(l) + "." + part;
}

Eigen::Map<Matrix> grad_view(std::vector<double>& grad, const Segment& s) {
    return {grad.data() + s.offset, s.rows, s.cols};
}

} // namespace

void EncoderConfig::validate() const {
    if (image_size < 1 || patch_size < 1 || channels_in < 1 || embed_dim < 1 || hidden_dim < 1) {
        throw std::invalid_argument("EncoderConfig: all dimensions must be >= 1");
    }
    if (image_size % patch_size != 0) {
        throw std::invalid_argument("EncoderConfig: patch size must divide image size");
    }
}

void HeadConfig::validate() const {
    if (layers < 1 || hidden < 1 || bottleneck < 1 || prototypes < 1) {
        throw std::invalid_argument("HeadConfig: all dimensions must be >= 1");
    }
}

ParamLayout::ParamLayout(const EncoderConfig& encoder, const HeadConfig& head) : encoder_(encoder), head_(head) {
    encoder.validate();
    head.validate();
    const int c = encoder.embed_dim;
    add("encoder.embed.weight", c, encoder.patch_dim());
    add("encoder.embed.bias", c, 1);
    add("encoder.mlp1.weight", encoder.hidden_dim, c);
    add("encoder.mlp1.bias", encoder.hidden_dim, 1);
    add("encoder.mlp2.weight", c, encoder.hidden_dim);
    add("encoder.mlp2.bias", c, 1);
    int in = c;
    for (int l = 0; l < head.layers; ++l) {
        const int out = (l + 1 == head.layers) ? head.bottleneck : head.hidden;
        add(layer_name(l, "weight"), out, in);
        add(layer_name(l, "bias"), out, 1);
        in = out;
    }
    add("head.prototypes", head.prototypes, head.bottleneck);
}

void ParamLayout::add(std::string name, int rows, int cols) {
    segments_.push_back({std::move(name), total_, rows, cols});
    total_ += segments_.back().size();
}

const Segment& ParamLayout::segment(std::string_view name) const {
    for (const Segment& s : segments_) {
        if (s.name == name) {
            return s;
        }
    }
    throw std::out_of_range("ParamLayout: no segment named " + std::string(name));
}

const Segment& ParamLayout::owner(std::size_t i) const {
    for (const Segment& s : segments_) {
        if (i >= s.offset && i < s.offset + s.size()) {
            return s;
        }
    }
    throw std::out_of_range("ParamLayout: index past the end of the parameter vector");
}

ModelParams::ModelParams(std::shared_ptr<const ParamLayout> layout)
    : layout_(std::move(layout)), values_(layout_->total(), 0.0) {}

Eigen::Map<Matrix> ModelParams::matrix(std::string_view name) {
    const Segment& s = layout_->segment(name);
    return {values_.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<const Matrix> ModelParams::matrix(std::string_view name) const {
    const Segment& s = layout_->segment(name);
    return {values_.data() + s.offset, s.rows, s.cols};
}

bool ModelParams::same_layout(const ModelParams& other) const {
    if (!layout_ || !other.layout_) {
        return layout_ == other.layout_;
    }
    return layout_ == other.layout_ || *layout_ == *other.layout_;
}

ModelParams init_params(const EncoderConfig& encoder, const HeadConfig& head, std::uint64_t seed) {
    ModelParams params(std::make_shared<const ParamLayout>(encoder, head));
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (const Segment& s : params.layout().segments()) {
        if (s.cols == 1 && s.name.ends_with(".bias")) {
            continue;
        }
        const double stddev = 1.0 / std::sqrt(static_cast<double>(s.cols));
        auto m = params.matrix(s.name);
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                m(i, j) = stddev * normal(rng);
            }
        }
    }
    return params;
}

// input normalisation for colours in [0, 1]
constexpr double kPixelMean = 0.5;
constexpr double kPixelStd = 0.25;

Matrix extract_patches(const EncoderConfig& cfg, const FeatureMap& image) {
    if (image.height() != cfg.image_size || image.width() != cfg.image_size || image.channels() != cfg.channels_in) {
        throw std::invalid_argument("encode: image is " + std::to_string(image.height()) + "x" +
                                    std::to_string(image.width()) + "x" + std::to_string(image.channels()) +
                                    ", encoder expects " + std::to_string(cfg.image_size) + "x" +
                                    std::to_string(cfg.image_size) + "x" + std::to_string(cfg.channels_in));
    }
    const int p = cfg.patch_size;
    const int g = cfg.grid();
    Matrix patches(cfg.patch_dim(), cfg.tokens());
    for (int tr = 0; tr < g; ++tr) {
        for (int tc = 0; tc < g; ++tc) {
            const int token = tr * g + tc;
            int k = 0;
            for (int py = 0; py < p; ++py) {
                for (int px = 0; px < p; ++px) {
                    const auto px_vals = image.pixel(tr * p + py, tc * p + px);
                    for (double v : px_vals) {
                        patches(k++, token) = (v - kPixelMean) / kPixelStd;
                    }
                }
            }
        }
    }
    return patches;
}

Matrix to_tokens(const FeatureMap& map) {
    Matrix tokens(map.channels(), static_cast<Eigen::Index>(map.pixels()));
    for (int r = 0; r < map.height(); ++r) {
        for (int c = 0; c < map.width(); ++c) {
            const auto f = map.pixel(r, c);
            const Eigen::Index t = static_cast<Eigen::Index>(r) * map.width() + c;
            for (int ch = 0; ch < map.channels(); ++ch) {
                tokens(ch, t) = f[ch];
            }
        }
    }
    return tokens;
}

FeatureMap from_tokens(const Matrix& tokens, int grid_h, int grid_w) {
    if (tokens.cols() != static_cast<Eigen::Index>(grid_h) * grid_w) {
        throw std::invalid_argument("from_tokens: token count does not match grid");
    }
    FeatureMap map(grid_h, grid_w, static_cast<int>(tokens.rows()));
    for (int r = 0; r < grid_h; ++r) {
        for (int c = 0; c < grid_w; ++c) {
            auto f = map.pixel(r, c);
            const Eigen::Index t = static_cast<Eigen::Index>(r) * grid_w + c;
            for (Eigen::Index ch = 0; ch < tokens.rows(); ++ch) {
                f[ch] = tokens(ch, t);
            }
        }
    }
    return map;
}

double gelu(double x) {
    return 0.5 * x * (1.0 + std::tanh(kGeluScale * (x + kGeluCubic * x * x * x)));
}

double gelu_derivative(double x) {
    const double t = std::tanh(kGeluScale * (x + kGeluCubic * x * x * x));
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
}

EncoderCache encoder_forward(const ModelParams& params, const Matrix& patches) {
    EncoderCache c;
    c.patches = patches;
    c.embed = (params.matrix("encoder.embed.weight") * patches).colwise() +
              params.matrix("encoder.embed.bias").col(0);
    c.pre = (params.matrix("encoder.mlp1.weight") * c.embed).colwise() + params.matrix("encoder.mlp1.bias").col(0);
    c.act = c.pre.unaryExpr([](double v) { return gelu(v); });
    c.out = c.embed + ((params.matrix("encoder.mlp2.weight") * c.act).colwise() +
                       params.matrix("encoder.mlp2.bias").col(0));
    return c;
}

void encoder_backward(const ModelParams& params, const EncoderCache& cache, const Matrix& d_out,
                      std::vector<double>& grad) {
    const ParamLayout& layout = params.layout();
    grad_view(grad, layout.segment("encoder.mlp2.weight")) += d_out * cache.act.transpose();
    grad_view(grad, layout.segment("encoder.mlp2.bias")) += d_out.rowwise().sum();
    const Matrix d_act = params.matrix("encoder.mlp2.weight").transpose() * d_out;
    const Matrix d_pre = d_act.cwiseProduct(cache.pre.unaryExpr([](double v) { return gelu_derivative(v); }));
    grad_view(grad, layout.segment("encoder.mlp1.weight")) += d_pre * cache.embed.transpose();
    grad_view(grad, layout.segment("encoder.mlp1.bias")) += d_pre.rowwise().sum();
    const Matrix d_embed = d_out + params.matrix("encoder.mlp1.weight").transpose() * d_pre;
    grad_view(grad, layout.segment("encoder.embed.weight")) += d_embed * cache.patches.transpose();
    grad_view(grad, layout.segment("encoder.embed.bias")) += d_embed.rowwise().sum();
}

HeadCache head_forward(const ModelParams& params, const Matrix& features) {
    const int layers = params.layout().head().layers;
    HeadCache c;
    Matrix x = features;
    for (int l = 0; l < layers; ++l) {
        c.inputs.push_back(x);
        Matrix z = (params.matrix(layer_name(l, "weight")) * x).colwise() +
                   params.matrix(layer_name(l, "bias")).col(0);
        if (l + 1 == layers) {
            c.bottleneck = std::move(z);
        } else {
            x = z.unaryExpr([](double v) { return gelu(v); });
            c.pre.push_back(std::move(z));
        }
    }
    c.norms = c.bottleneck.colwise().norm();
    c.normalized = c.bottleneck;
    for (Eigen::Index t = 0; t < c.normalized.cols(); ++t) {
        c.normalized.col(t) /= std::max(c.norms(t), kNormEps);
    }
    c.logits = params.matrix("head.prototypes") * c.normalized;
    return c;
}

Matrix head_backward(const ModelParams& params, const HeadCache& cache, const Matrix& d_logits,
                     std::vector<double>& grad) {
    const ParamLayout& layout = params.layout();
    const int layers = layout.head().layers;
    grad_view(grad, layout.segment("head.prototypes")) += d_logits * cache.normalized.transpose();
    const Matrix d_norm = params.matrix("head.prototypes").transpose() * d_logits;

    Matrix d_z(d_norm.rows(), d_norm.cols());
    for (Eigen::Index t = 0; t < d_norm.cols(); ++t) {
        const double n = cache.norms(t);
        if (n > kNormEps) {
            const auto u = cache.normalized.col(t);
            d_z.col(t) = (d_norm.col(t) - u * u.dot(d_norm.col(t))) / n;
        } else {
            d_z.col(t) = d_norm.col(t) / kNormEps;
        }
    }

    for (int l = layers - 1; l >= 0; --l) {
        grad_view(grad, layout.segment(layer_name(l, "weight"))) += d_z * cache.inputs[l].transpose();
        grad_view(grad, layout.segment(layer_name(l, "bias"))) += d_z.rowwise().sum();
        Matrix d_in = params.matrix(layer_name(l, "weight")).transpose() * d_z;
        if (l == 0) {
            return d_in;
        }
        d_z = d_in.cwiseProduct(cache.pre[l - 1].unaryExpr([](double v) { return gelu_derivative(v); }));
    }
    return d_z; // unreachable: layers >= 1
}

FeatureMap encode(const ModelParams& params, const FeatureMap& image) {
    const EncoderConfig& cfg = params.layout().encoder();
    const EncoderCache cache = encoder_forward(params, extract_patches(cfg, image));
    return from_tokens(cache.out, cfg.grid(), cfg.grid());
}

Matrix head_logits(const ModelParams& params, const FeatureMap& features) {
    if (features.channels() != params.layout().encoder().embed_dim) {
        throw std::invalid_argument("head_logits: feature channels do not match the head input");
    }
    return head_forward(params, to_tokens(features)).logits.transpose();
}

} // namespace snd::distill
