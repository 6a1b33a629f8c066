#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <tuple>

#include "aop/errors.hpp"
#include "aop/ops.hpp"
#include "aop/sampler.hpp"
#include "oracles.hpp"

using namespace aop;

namespace {

using Cell = std::pair<std::size_t, std::size_t>;

// Brute force: every candidate is checked against the full map, and the
// suppression walks candidates by repeatedly picking the best remaining one.
std::vector<Cell> peaks_oracle(const Tensor& m, int d, double thr) {
    const int h = static_cast<int>(m.dim(0)), w = static_cast<int>(m.dim(1));
    std::vector<std::tuple<float, int, int>> cand;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            if (m(y, x) < thr) continue;
            bool ok = true;
            for (int yy = 0; yy < h; ++yy)
                for (int xx = 0; xx < w; ++xx)
                    if (std::max(std::abs(yy - y), std::abs(xx - x)) <= d && m(yy, xx) > m(y, x)) ok = false;
            if (ok) cand.emplace_back(m(y, x), y, x);
        }
    std::vector<Cell> kept;
    while (!cand.empty()) {
        auto best = cand.begin();
        for (auto it = cand.begin(); it != cand.end(); ++it) {
            const auto [v, y, x] = *it;
            const auto [bv, by, bx] = *best;
            if (v > bv || (v == bv && std::make_pair(y, x) < std::make_pair(by, bx))) best = it;
        }
        const auto [v, y, x] = *best;
        cand.erase(best);
        bool clear = true;
        for (const auto& [ky, kx] : kept)
            if (std::max(std::abs(static_cast<int>(ky) - y), std::abs(static_cast<int>(kx) - x)) < d) clear = false;
        if (clear) kept.emplace_back(y, x);
    }
    return kept;
}

std::vector<Cell> cells(const std::vector<Peak>& p) {
    std::vector<Cell> out;
    for (const auto& q : p) out.emplace_back(q.row, q.col);
    return out;
}

Tensor quantized_map(std::size_t h, std::size_t w, std::mt19937_64& rng, int levels) {
    std::uniform_int_distribution<int> u(0, levels - 1);
    Tensor t({h, w});
    for (float& v : t.data()) v = static_cast<float>(u(rng)) / static_cast<float>(levels - 1);
    return t;
}

} // namespace

TEST(FindPeaks, SingleSpike) {
    Tensor m({5, 5});
    m(2, 3) = 0.9f;
    const auto p = find_peaks(m, 1, 0.5);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p[0].row, 2u);
    EXPECT_EQ(p[0].col, 3u);
    EXPECT_FLOAT_EQ(p[0].value, 0.9f);
}

TEST(FindPeaks, FlatMapBelowThresholdIsEmpty) {
    Tensor m({6, 6}, 0.1f);
    EXPECT_TRUE(find_peaks(m, 2, 0.2).empty());
}

TEST(FindPeaks, PlateauKeepsFirstInRowMajorOrder) {
    Tensor m({4, 4}, 0.5f);
    const auto p = find_peaks(m, 4, 0.1);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_EQ(p[0].row, 0u);
    EXPECT_EQ(p[0].col, 0u);
}

TEST(FindPeaks, RejectsBadArguments) {
    EXPECT_THROW(find_peaks(Tensor({4}), 1, 0.0), DimensionError);
    EXPECT_THROW(find_peaks(Tensor({4, 4}), 0, 0.0), ConfigError);
}

TEST(FindPeaks, MatchesBruteForce) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t h = 2 + rng() % 9, w = 2 + rng() % 9;
        const int d = 1 + static_cast<int>(rng() % 3);
        const double thr = static_cast<double>(rng() % 5) / 5.0;
        // few levels so plateaus and ties are common
        const Tensor m = quantized_map(h, w, rng, 2 + static_cast<int>(rng() % 6));
        EXPECT_EQ(cells(find_peaks(m, d, thr)), peaks_oracle(m, d, thr)) << "trial " << trial;
    }
}

TEST(FindPeaks, SpacingAndThresholdHold) {
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor m = oracle::random_tensor({16, 16}, rng, 0.0f, 1.0f);
        const int d = 1 + static_cast<int>(rng() % 4);
        const auto p = find_peaks(m, d, 0.3);
        for (std::size_t i = 0; i < p.size(); ++i) {
            EXPECT_GE(p[i].value, 0.3f);
            if (i > 0) {
                EXPECT_LE(p[i].value, p[i - 1].value);
            }
            for (std::size_t j = i + 1; j < p.size(); ++j) {
                const long dy = std::labs(static_cast<long>(p[i].row) - static_cast<long>(p[j].row));
                const long dx = std::labs(static_cast<long>(p[i].col) - static_cast<long>(p[j].col));
                EXPECT_GE(std::max(dy, dx), d);
            }
        }
    }
}

TEST(FindPeaks, RaisingThresholdNeverAddsPeaks) {
    std::mt19937_64 rng(33);
    for (int trial = 0; trial < 100; ++trial) {
        const Tensor m = gaussian_filter(oracle::random_tensor({20, 20}, rng, 0.0f, 1.0f), 1.0);
        const int d = 1 + static_cast<int>(rng() % 3);
        std::size_t prev = std::numeric_limits<std::size_t>::max();
        std::set<Cell> prev_set;
        for (double thr = 0.0; thr <= 1.0; thr += 0.05) {
            const auto c = cells(find_peaks(m, d, thr));
            EXPECT_LE(c.size(), prev);
            if (prev != std::numeric_limits<std::size_t>::max()) {
                for (const auto& q : c) EXPECT_TRUE(prev_set.count(q));
            }
            prev = c.size();
            prev_set = std::set<Cell>(c.begin(), c.end());
        }
    }
}

TEST(CellToImage, CentersAndClamps) {
    EXPECT_EQ(cell_to_image(0, 64, 256), 2);
    EXPECT_EQ(cell_to_image(63, 64, 256), 254);
    EXPECT_EQ(cell_to_image(10, 64, 256), 42);
    EXPECT_EQ(cell_to_image(0, 4, 4), 0);
    EXPECT_EQ(cell_to_image(3, 4, 4), 3);
    for (std::size_t c = 0; c < 24; ++c) {
        const int px = cell_to_image(c, 24, 96);
        EXPECT_EQ(image_to_cell(px, 96, 24), c);
    }
}

TEST(Sample, EmitsPromptsInImageCoordinates) {
    PromptConfidenceMap pcm{Tensor({16, 16}), {64, 64}};
    pcm.values(3, 4) = 1.0f;
    pcm.values(12, 10) = 0.8f;
    SamplerConfig cfg;
    cfg.smoothing_sigma = 0.0;
    cfg.intensity_threshold = 0.5;
    cfg.spacing = 2;
    const PromptPool pool = sample(pcm, cfg, 7);
    ASSERT_EQ(pool.size(), 2u);
    EXPECT_EQ(pool.at(0).id, 7);
    EXPECT_EQ(pool.at(0).x, cell_to_image(4, 16, 64));
    EXPECT_EQ(pool.at(0).y, cell_to_image(3, 16, 64));
    EXPECT_FLOAT_EQ(pool.at(0).score, 1.0f);
    EXPECT_EQ(pool.at(1).id, 8);
    EXPECT_EQ(pool.at(1).x, cell_to_image(10, 16, 64));
    EXPECT_EQ(pool.pending_count(), 2u);
}

TEST(Sample, NonSquareImageUsesBothExtents) {
    PromptConfidenceMap pcm{Tensor({8, 8}), {40, 80}};
    pcm.values(7, 7) = 1.0f;
    SamplerConfig cfg;
    cfg.smoothing_sigma = 0.0;
    const PromptPool pool = sample(pcm, cfg);
    ASSERT_EQ(pool.size(), 1u);
    EXPECT_EQ(pool.at(0).x, cell_to_image(7, 8, 80));
    EXPECT_EQ(pool.at(0).y, cell_to_image(7, 8, 40));
}

TEST(Sample, SmoothingMergesNeighbouringSpikes) {
    PromptConfidenceMap pcm{Tensor({32, 32}), {128, 128}};
    pcm.values(10, 10) = 1.0f;
    pcm.values(10, 12) = 1.0f;
    SamplerConfig sharp;
    sharp.smoothing_sigma = 0.0;
    sharp.spacing = 1;
    sharp.intensity_threshold = 0.01;
    EXPECT_EQ(sample(pcm, sharp).size(), 2u);
    SamplerConfig smooth = sharp;
    smooth.smoothing_sigma = 2.0;
    smooth.spacing = 2;
    EXPECT_EQ(sample(pcm, smooth).size(), 1u);
}

TEST(Sample, HigherThresholdNeverAddsPrompts) {
    std::mt19937_64 rng(34);
    for (int trial = 0; trial < 30; ++trial) {
        PromptConfidenceMap pcm{oracle::random_tensor({24, 24}, rng, 0.0f, 1.0f), {96, 96}};
        SamplerConfig cfg;
        std::size_t prev = std::numeric_limits<std::size_t>::max();
        for (double thr : {0.0, 0.2, 0.4, 0.5, 0.6, 0.8}) {
            cfg.intensity_threshold = thr;
            const auto n = sample(pcm, cfg).size();
            EXPECT_LE(n, prev);
            prev = n;
        }
    }
}

TEST(SamplerConfig, Validation) {
    SamplerConfig c;
    EXPECT_NO_THROW(c.validate());
    c.spacing = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.smoothing_sigma = -1;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.intensity_threshold = 1.5;
    EXPECT_THROW(c.validate(), ConfigError);
}
