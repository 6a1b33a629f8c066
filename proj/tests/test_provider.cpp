#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "aop/errors.hpp"
#include "aop/io.hpp"
#include "aop/ops.hpp"
#include "aop/provider.hpp"
#include "aop/scenegen.hpp"
#include "aop/tensor_io.hpp"

using namespace aop;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("aop_test_provider_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

SceneSpec small_spec(std::uint64_t seed) {
    SceneSpec s;
    s.seed = seed;
    s.image_size = 64;
    s.min_regions = 3;
    s.max_regions = 6;
    s.embed_channels = 16;
    s.nesting_probability = 0.5;
    s.min_area_fraction = 0.01;
    return s;
}

Region rect_region(std::size_t H, std::size_t W, int y0, int x0, int y1, int x1, std::vector<float> feature) {
    Region r;
    r.mask = Tensor({H, W});
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) r.mask(y, x) = 1.0f;
    r.feature = std::move(feature);
    r.iou_confidence = 0.95f;
    r.stability = 0.9f;
    return r;
}

std::vector<float> unit(std::size_t c, std::size_t k) {
    std::vector<float> v(c, 0.0f);
    v[k] = 1.0f;
    return v;
}

// Two side-by-side rectangles on a 32x32 canvas, the left one holding a child.
SyntheticScene nested_scene() {
    SyntheticScene s;
    s.image = Tensor({3, 32, 32});
    s.background_feature = unit(4, 3);
    s.regions.push_back(rect_region(32, 32, 0, 0, 32, 16, unit(4, 0)));
    s.regions.push_back(rect_region(32, 32, 0, 16, 32, 32, unit(4, 1)));
    s.regions.push_back(rect_region(32, 32, 8, 4, 16, 12, unit(4, 2)));
    s.regions[2].parent = 0;
    s.regions[0].height = 1;
    s.regions[0].iou_confidence = 0.9f;
    return s;
}

bool same_proposal(const MaskProposal& a, const MaskProposal& b) {
    if (a.candidates.size() != b.candidates.size()) return false;
    for (std::size_t i = 0; i < a.candidates.size(); ++i) {
        if (!bitwise_equal(a.candidates[i].mask, b.candidates[i].mask)) return false;
        if (a.candidates[i].iou_confidence != b.candidates[i].iou_confidence) return false;
        if (a.candidates[i].stability != b.candidates[i].stability) return false;
    }
    return true;
}

double cosine(const float* a, const float* b, std::size_t c) {
    double d = 0, na = 0, nb = 0;
    for (std::size_t k = 0; k < c; ++k) {
        d += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    return d / std::sqrt(na * nb);
}

} // namespace

TEST(OracleDecode, TopLevelRegionGivesOneCandidate) {
    const auto s = nested_scene();
    const auto p = oracle_decode(s, {{0, 24, 5}, true});
    ASSERT_EQ(p.candidates.size(), 1u);
    EXPECT_TRUE(bitwise_equal(p.candidates[0].mask, s.regions[1].mask));
}

TEST(OracleDecode, NestedPointReturnsChildThenParent) {
    const auto s = nested_scene();
    const auto p = oracle_decode(s, {{0, 6, 10}, true});
    ASSERT_EQ(p.candidates.size(), 2u);
    EXPECT_TRUE(bitwise_equal(p.candidates[0].mask, s.regions[2].mask));
    EXPECT_TRUE(bitwise_equal(p.candidates[1].mask, s.regions[0].mask));
    EXPECT_GT(p.candidates[0].iou_confidence, p.candidates[1].iou_confidence);
    const auto single = oracle_decode(s, {{0, 6, 10}, false});
    EXPECT_EQ(single.candidates.size(), 1u);
}

TEST(OracleDecode, BackgroundIsEmpty) {
    auto s = nested_scene();
    s.regions.pop_back();
    s.regions[1].mask(3, 20) = 0.0f;
    EXPECT_TRUE(oracle_decode(s, {{0, 20, 3}, true}).candidates.empty());
}

TEST(SynthEmbedding, NoiselessSingleRegion) {
    SyntheticScene s;
    s.image = Tensor({3, 16, 16});
    s.background_feature = unit(4, 3);
    s.regions.push_back(rect_region(16, 16, 0, 0, 16, 16, {0.6f, 0.8f, 0.0f, 0.0f}));
    const FeatureMap f = synth_embedding(s, 0.0, 1);
    ASSERT_EQ(f.values.shape(), (Shape{4, 4, 4}));
    for (std::size_t p = 0; p < 16; ++p) {
        EXPECT_NEAR(f.values[p * 4 + 0], 0.6f, 1e-6);
        EXPECT_NEAR(f.values[p * 4 + 1], 0.8f, 1e-6);
    }
}

TEST(SynthEmbedding, NoiselessRegionsAreOrthogonal) {
    const auto s = nested_scene();
    const FeatureMap f = synth_embedding(s, 0.0, 1);
    const float* left = f.values.ptr() + (0 * 8 + 0) * 4;
    const float* left2 = f.values.ptr() + (7 * 8 + 1) * 4;
    const float* right = f.values.ptr() + (0 * 8 + 7) * 4;
    EXPECT_NEAR(cosine(left, left2, 4), 1.0, 1e-6);
    EXPECT_LT(std::abs(cosine(left, right, 4)), 0.1);
}

TEST(SynthEmbedding, DeterministicUnderSeed) {
    const auto s = generate(small_spec(3));
    EXPECT_TRUE(bitwise_equal(synth_embedding(s, 0.1, 9).values, synth_embedding(s, 0.1, 9).values));
    EXPECT_FALSE(bitwise_equal(synth_embedding(s, 0.1, 9).values, synth_embedding(s, 0.1, 10).values));
}

TEST(SynthEmbedding, RegionalCoherenceFuzz) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        SceneSpec spec;
        spec.seed = seed;
        spec.image_size = 128;
        const auto scene = generate(spec);
        for (double sigma : {0.1, 0.3}) {
            const FeatureMap f = synth_embedding(scene, sigma, seed + 100);
            const std::size_t g = f.h(), c = f.c();
            std::vector<int> label(g * g);
            for (std::size_t i = 0; i < g; ++i)
                for (std::size_t j = 0; j < g; ++j) {
                    const int px = static_cast<int>(std::min<double>(127, (j + 0.5) * 128.0 / g));
                    const int py = static_cast<int>(std::min<double>(127, (i + 0.5) * 128.0 / g));
                    label[i * g + j] = scene.innermost_region_at(px, py);
                }
            double within = 0, cross = 0;
            std::size_t nw = 0, nc = 0;
            for (std::size_t a = 0; a < label.size(); a += 3)
                for (std::size_t b = a + 1; b < label.size(); b += 5) {
                    const double cs = cosine(f.values.ptr() + a * c, f.values.ptr() + b * c, c);
                    if (label[a] == label[b]) {
                        within += cs;
                        ++nw;
                    } else {
                        cross += cs;
                        ++nc;
                    }
                }
            ASSERT_GT(nw, 0u);
            ASSERT_GT(nc, 0u);
            EXPECT_GT(within / nw, cross / nc) << "seed " << seed << " sigma " << sigma;
        }
    }
}

TEST(OracleProvider, DeterministicAndRealRegions) {
    const auto scene = generate(small_spec(11));
    const OracleProvider prov(scene, hwc_to_chw(synth_embedding(scene, 0.1, 1).values));
    std::mt19937_64 rng(5);
    for (int i = 0; i < 200; ++i) {
        const MaskQuery q{{i, static_cast<int>(rng() % 64), static_cast<int>(rng() % 64)}, true};
        const auto a = prov.decode(q), b = prov.decode(q);
        EXPECT_TRUE(same_proposal(a, b));
        EXPECT_LE(a.candidates.size(), 3u);
        for (const auto& c : a.candidates) {
            const bool real = std::any_of(scene.regions.begin(), scene.regions.end(),
                                          [&](const Region& r) { return bitwise_equal(r.mask, c.mask); });
            EXPECT_TRUE(real);
            EXPECT_EQ(c.mask(q.prompt.y, q.prompt.x), 1.0f);
        }
    }
}

TEST(FileAdapter, RoundTripMatchesOracle) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto scene = generate(small_spec(seed));
        const FeatureMap emb = synth_embedding(scene, 0.1, seed);
        const fs::path dir = fresh_dir("rt" + std::to_string(seed));
        write_scene_dir(dir, scene, emb);
        const FileAdapter fa = FileAdapter::load(dir);
        EXPECT_EQ(fa.image_size(), scene.size());
        EXPECT_TRUE(bitwise_equal(fa.embedding(), hwc_to_chw(emb.values)));
        for (int y = 0; y < 64; y += 3)
            for (int x = 0; x < 64; x += 3)
                for (bool mm : {true, false}) {
                    const MaskQuery q{{0, x, y}, mm};
                    EXPECT_TRUE(same_proposal(fa.decode(q), oracle_decode(scene, q))) << seed << " " << x << "," << y;
                }
        fs::remove_all(dir);
    }
}

TEST(FileAdapter, EmptyBankAnswersNothing) {
    const fs::path dir = fresh_dir("empty");
    std::ofstream(dir / "index.json") << R"({"masks":[],"image_size":[8,8]})";
    save_tensor(dir / "embedding.aopt", Tensor({4, 2, 2}));
    const FileAdapter fa = FileAdapter::load(dir);
    EXPECT_TRUE(fa.decode({{0, 3, 3}, true}).candidates.empty());
    EXPECT_THROW(fa.decode({{0, 8, 3}, true}), ProviderError);
    fs::remove_all(dir);
}

TEST(FileAdapter, MalformedIndexThrows) {
    const fs::path dir = fresh_dir("bad");
    std::ofstream(dir / "index.json") << R"({"masks":[{"file":"masks/000.aopt"}, )";
    save_tensor(dir / "embedding.aopt", Tensor({4, 2, 2}));
    EXPECT_THROW(FileAdapter::load(dir), FormatError);
    fs::remove_all(dir);
}

TEST(FileAdapter, MissingEntriesAreListed) {
    const fs::path dir = fresh_dir("missing");
    try {
        FileAdapter::load(dir);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("embedding.aopt"), std::string::npos);
        EXPECT_NE(msg.find("index.json"), std::string::npos);
    }
    std::ofstream(dir / "index.json") << R"({"masks":[{"file":"masks/007.aopt","iou":0.9,"stability":0.9}],"image_size":[8,8]})";
    save_tensor(dir / "embedding.aopt", Tensor({4, 2, 2}));
    try {
        FileAdapter::load(dir);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("masks/007.aopt"), std::string::npos);
    }
    fs::remove_all(dir);
}

TEST(FileAdapter, MaskShapeMismatchThrows) {
    const fs::path dir = fresh_dir("shape");
    fs::create_directories(dir / "masks");
    std::ofstream(dir / "index.json") << R"({"masks":[{"file":"masks/000.aopt","iou":0.9,"stability":0.9}],"image_size":[8,8]})";
    save_tensor(dir / "embedding.aopt", Tensor({4, 2, 2}));
    save_tensor(dir / "masks/000.aopt", Tensor({8, 9}));
    EXPECT_THROW(FileAdapter::load(dir), FormatError);
    fs::remove_all(dir);
}
