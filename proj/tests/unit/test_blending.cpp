// SPDX-License-Identifier: Apache-2.0
#include "snd/blending.hpp"
#include "snd/parallel.hpp"

#include <gtest/gtest.h>

#include <random>

namespace snd {
namespace {

FeatureMap random_map(std::uint64_t seed, int h, int w, int c) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    FeatureMap m(h, w, c);
    for (double& v : m.data()) {
        v = n(rng);
    }
    return m;
}

SemanticMask striped(int h, int w) {
    SemanticMask m(h, w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            m.at(r, c) = static_cast<Label>((c * 3) / w);
        }
    }
    return m;
}

TEST(SemanticBlend, HandExample) {
    // one region {1, 3}, another {10}
    FeatureMap f(1, 3, 1, std::vector<double>{1, 3, 10});
    SemanticMask m(1, 3, std::vector<Label>{4, 4, 9});
    const FeatureMap out = semantic_blend(f, m, 0.5);
    EXPECT_DOUBLE_EQ(out.at(0, 0, 0), 0.5 * 1 + 0.5 * 2);
    EXPECT_DOUBLE_EQ(out.at(0, 1, 0), 0.5 * 3 + 0.5 * 2);
    EXPECT_DOUBLE_EQ(out.at(0, 2, 0), 10.0);
}

TEST(SemanticBlend, AlphaOneIsIdentity) {
    const FeatureMap f = random_map(1, 12, 12, 4);
    EXPECT_EQ(semantic_blend(f, striped(12, 12), 1.0), f);
}

TEST(SemanticBlend, AlphaZeroIsRegionMean) {
    const FeatureMap f = random_map(2, 12, 12, 2);
    const SemanticMask m = striped(12, 12);
    const FeatureMap out = semantic_blend(f, m, 0.0);
    for (int r = 0; r < 12; ++r) {
        for (int c = 0; c < 12; ++c) {
            for (int ch = 0; ch < 2; ++ch) {
                // constant inside a stripe
                EXPECT_NEAR(out.at(r, c, ch), out.at(0, (c / 4) * 4, ch), 1e-12);
            }
        }
    }
}

TEST(SemanticBlend, PreservesRegionMeans) {
    const FeatureMap f = random_map(3, 9, 15, 3);
    const SemanticMask m = striped(9, 15);
    const FeatureMap out = semantic_blend(f, m, 0.3);
    for (Label l = 0; l < 3; ++l) {
        for (int ch = 0; ch < 3; ++ch) {
            double a = 0.0, b = 0.0;
            int n = 0;
            for (int r = 0; r < 9; ++r) {
                for (int c = 0; c < 15; ++c) {
                    if (m.at(r, c) == l) {
                        a += f.at(r, c, ch);
                        b += out.at(r, c, ch);
                        ++n;
                    }
                }
            }
            EXPECT_NEAR(a / n, b / n, 1e-12);
        }
    }
}

TEST(SemanticBlend, ShrinksWithinRegionVariance) {
    const FeatureMap f = random_map(4, 10, 10, 1);
    const SemanticMask m(10, 10, 0);
    const FeatureMap out = semantic_blend(f, m, 0.25);
    double mean = 0.0;
    for (double v : f.data()) {
        mean += v;
    }
    mean /= 100.0;
    for (std::size_t i = 0; i < f.data().size(); ++i) {
        EXPECT_NEAR(out.data()[i] - mean, 0.25 * (f.data()[i] - mean), 1e-12);
    }
}

TEST(SemanticBlend, WeightedMeanAndZeroWeightFallback) {
    FeatureMap f(1, 4, 1, std::vector<double>{2, 6, 1, 5});
    SemanticMask m(1, 4, std::vector<Label>{0, 0, 1, 1});
    FeatureMap w(1, 4, 1, std::vector<double>{3, 1, 0, 0});
    const FeatureMap out = semantic_blend(f, m, 0.0, &w);
    EXPECT_DOUBLE_EQ(out.at(0, 0, 0), 3.0); // (3*2 + 1*6) / 4
    EXPECT_DOUBLE_EQ(out.at(0, 2, 0), 3.0); // unweighted fallback
}

TEST(SemanticBlend, ThreadCountInvariant) {
    const FeatureMap f = random_map(5, 40, 40, 8);
    const SemanticMask m = striped(40, 40);
    set_num_threads(1);
    const FeatureMap one = semantic_blend(f, m, 0.5);
    set_num_threads(4);
    const FeatureMap four = semantic_blend(f, m, 0.5);
    set_num_threads(1);
    EXPECT_EQ(one, four);
}

TEST(SemanticBlend, RejectsBadInputs) {
    const FeatureMap f(4, 4, 1);
    EXPECT_THROW(semantic_blend(f, SemanticMask(4, 5), 0.5), std::invalid_argument);
    EXPECT_THROW(semantic_blend(f, SemanticMask(4, 4), 1.5), std::invalid_argument);
    EXPECT_THROW(semantic_blend(f, SemanticMask(4, 4), -0.1), std::invalid_argument);
    const FeatureMap w(4, 4, 2);
    EXPECT_THROW(semantic_blend(f, SemanticMask(4, 4), 0.5, &w), std::invalid_argument);
}

} // namespace
} // namespace snd
