#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "aop/errors.hpp"
#include "aop/ops.hpp"
#include "aop/predictor.hpp"
#include "aop/tensor_io.hpp"
#include "oracles.hpp"

using namespace aop;

namespace {

PredictorConfig small_config(std::size_t image = 16, std::size_t c = 4) { return PredictorConfig::for_image(image, c); }

TrainingSample random_sample(const PredictorConfig& cfg, std::mt19937_64& rng) {
    TrainingSample s;
    s.image = oracle::random_tensor({3, cfg.image_size, cfg.image_size}, rng, 0.0f, 1.0f);
    s.embedding = oracle::random_tensor({cfg.embed_channels, cfg.pcm_size, cfg.pcm_size}, rng);
    std::vector<PointPrompt> pts;
    for (int i = 0; i < 2; ++i) {
        PointPrompt p;
        p.id = i;
        p.x = static_cast<int>(rng() % cfg.image_size);
        p.y = static_cast<int>(rng() % cfg.image_size);
        pts.push_back(p);
    }
    s.gt = build_gt_map(pts, {cfg.image_size, cfg.image_size}, cfg.pcm_size, 1, 0.75);
    return s;
}

std::vector<float*> all_parameters(PredictorWeights& w) {
    std::vector<float*> out;
    for (auto& l : w.layers) {
        for (float& v : l.weight.data()) out.push_back(&v);
        for (float& v : l.bias.data()) out.push_back(&v);
    }
    return out;
}

} // namespace

TEST(PredictorConfig, ImageIsFourTimesMap) {
    EXPECT_NO_THROW(PredictorConfig{}.validate());
    PredictorConfig bad;
    bad.pcm_size = 32;
    EXPECT_THROW(bad.validate(), ConfigError);
    const auto cfg = PredictorConfig::for_image(96, 8);
    EXPECT_EQ(cfg.pcm_size, 24u);
    EXPECT_EQ(cfg.embed_channels, 8u);
}

TEST(Predictor, ZeroWeightsGiveHalf) {
    const auto cfg = small_config();
    std::mt19937_64 rng(1);
    const auto s = random_sample(cfg, rng);
    const auto pcm = forward(PredictorWeights::zeros(cfg), cfg, s.image, s.embedding);
    ASSERT_EQ(pcm.values.shape(), (Shape{cfg.pcm_size, cfg.pcm_size}));
    for (float v : pcm.values.data()) EXPECT_EQ(v, 0.5f);
}

TEST(Predictor, OutputInUnitIntervalAndDeterministic) {
    const auto cfg = small_config(32, 6);
    std::mt19937_64 rng(2);
    const auto w = PredictorWeights::init(cfg, 9);
    for (int trial = 0; trial < 5; ++trial) {
        const auto s = random_sample(cfg, rng);
        const auto a = forward(w, cfg, s.image, s.embedding);
        const auto b = forward(w, cfg, s.image, s.embedding);
        EXPECT_TRUE(bitwise_equal(a.values, b.values));
        for (float v : a.values.data()) {
            EXPECT_GT(v, 0.0f);
            EXPECT_LT(v, 1.0f);
        }
    }
}

TEST(Predictor, ShapeMismatchThrows) {
    const auto cfg = small_config();
    const auto w = PredictorWeights::init(cfg, 1);
    EXPECT_THROW(forward(w, cfg, Tensor({3, 20, 20}), Tensor({4, 4, 4})), DimensionError);
    EXPECT_THROW(forward(w, cfg, Tensor({3, 16, 16}), Tensor({5, 4, 4})), DimensionError);
}

TEST(Predictor, InitIsSeededAndSmall) {
    const auto cfg = PredictorConfig{};
    const auto a = PredictorWeights::init(cfg, 5), b = PredictorWeights::init(cfg, 5), c = PredictorWeights::init(cfg, 6);
    EXPECT_TRUE(bitwise_equal(a, b));
    EXPECT_FALSE(bitwise_equal(a, c));
    EXPECT_LT(a.parameter_count(), 1000000u);
}

TEST(GtMap, EmptyIsZero) {
    const auto gt = build_gt_map({}, {64, 64}, 16);
    for (float v : gt.values.data()) EXPECT_EQ(v, 0.0f);
}

TEST(GtMap, SinglePointPeaksAtItsCell) {
    PointPrompt p;
    p.x = 37;
    p.y = 10;
    const auto gt = build_gt_map(std::vector<PointPrompt>{p}, {64, 64}, 16);
    const auto it = std::max_element(gt.values.data().begin(), gt.values.data().end());
    EXPECT_EQ(*it, 1.0f);
    const auto idx = static_cast<std::size_t>(it - gt.values.data().begin());
    EXPECT_EQ(idx / 16, image_to_cell(10, 64, 16));
    EXPECT_EQ(idx % 16, image_to_cell(37, 64, 16));
    for (float v : gt.values.data()) {
        EXPECT_GE(v, 0.0f);
        EXPECT_LE(v, 1.0f);
    }
}

TEST(GtMap, FarPointsAreLocalMaximaAtTheirCells) {
    // direct evaluation: impulse -> 5x5 box -> Gaussian, both over a blank surround, -> /max
    std::vector<PointPrompt> pts(2);
    pts[0].x = 10;
    pts[0].y = 12;
    pts[1].x = 100;
    pts[1].y = 90;
    const std::size_t grid = 32;
    const auto gt = build_gt_map(pts, {128, 128}, grid);
    Tensor boxed({grid, grid});
    for (const auto& p : pts) {
        const int cy = static_cast<int>(std::floor((p.y + 0.5) * grid / 128.0));
        const int cx = static_cast<int>(std::floor((p.x + 0.5) * grid / 128.0));
        for (int dy = -2; dy <= 2; ++dy)
            for (int dx = -2; dx <= 2; ++dx) {
                const int y = cy + dy, x = cx + dx;
                if (y >= 0 && x >= 0 && y < static_cast<int>(grid) && x < static_cast<int>(grid)) boxed(y, x) += 1.0f / 25.0f;
            }
    }
    Tensor blurred({grid, grid});
    const auto taps = gaussian_kernel1d(1.5);
    const int rad = static_cast<int>(taps.size() / 2), n = static_cast<int>(grid);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            double acc = 0.0;
            for (int dy = -rad; dy <= rad; ++dy)
                for (int dx = -rad; dx <= rad; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy >= 0 && xx >= 0 && yy < n && xx < n) acc += taps[dy + rad] * taps[dx + rad] * boxed(yy, xx);
                }
            blurred(y, x) = static_cast<float>(acc);
        }
    const float mx = *std::max_element(blurred.data().begin(), blurred.data().end());
    for (std::size_t i = 0; i < blurred.size(); ++i) EXPECT_NEAR(gt.values[i], blurred[i] / mx, 1e-5);
    for (const auto& p : pts) {
        const std::size_t cy = image_to_cell(p.y, 128, grid), cx = image_to_cell(p.x, 128, grid);
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) EXPECT_LE(gt.values(cy + dy, cx + dx), gt.values(cy, cx));
    }
}

TEST(Training, LearningRateZeroLeavesWeights) {
    const auto cfg = small_config();
    std::mt19937_64 rng(3);
    std::vector<TrainingSample> data{random_sample(cfg, rng), random_sample(cfg, rng)};
    const auto w0 = PredictorWeights::init(cfg, 4);
    TrainOptions opts;
    opts.epochs = 5;
    opts.lr = 0.0;
    opts.batch = 1;
    const auto r = train(w0, cfg, data, opts);
    EXPECT_TRUE(bitwise_equal(r.weights, w0));
    EXPECT_EQ(r.loss_history.size(), 5u);
}

TEST(Training, DeterministicUnderSeed) {
    const auto cfg = small_config();
    std::mt19937_64 rng(3);
    std::vector<TrainingSample> data;
    for (int i = 0; i < 6; ++i) data.push_back(random_sample(cfg, rng));
    TrainOptions opts;
    opts.epochs = 4;
    opts.batch = 2;
    opts.accum_steps = 2;
    opts.seed = 17;
    const auto a = train(PredictorWeights::init(cfg, 1), cfg, data, opts);
    const auto b = train(PredictorWeights::init(cfg, 1), cfg, data, opts);
    EXPECT_TRUE(bitwise_equal(a.weights, b.weights));
    EXPECT_EQ(a.loss_history, b.loss_history);
}

TEST(Training, AugmentationIsSeededAndChangesTheRun) {
    const auto cfg = small_config();
    std::mt19937_64 rng(5);
    std::vector<TrainingSample> data;
    for (int i = 0; i < 4; ++i) data.push_back(random_sample(cfg, rng));
    TrainOptions opts;
    opts.epochs = 3;
    opts.batch = 2;
    opts.seed = 9;
    const auto plain = train(PredictorWeights::init(cfg, 1), cfg, data, opts);
    opts.augment = true;
    const auto a = train(PredictorWeights::init(cfg, 1), cfg, data, opts);
    const auto b = train(PredictorWeights::init(cfg, 1), cfg, data, opts);
    EXPECT_TRUE(bitwise_equal(a.weights, b.weights));
    EXPECT_FALSE(bitwise_equal(a.weights, plain.weights));
    opts.lr = 0.0;
    const auto frozen = train(PredictorWeights::init(cfg, 1), cfg, data, opts);
    EXPECT_TRUE(bitwise_equal(frozen.weights, PredictorWeights::init(cfg, 1)));
}

TEST(GtMap, CommutesWithMirroredPrompts) {
    // augmenting a sample must equal building it from mirrored annotations
    const std::size_t S = 32, m = 8;
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<PointPrompt> pts(3);
        for (int i = 0; i < 3; ++i) {
            pts[i].id = i;
            pts[i].x = static_cast<int>(rng() % S);
            pts[i].y = static_cast<int>(rng() % S);
        }
        const auto gt = build_gt_map(pts, {S, S}, m, 1, 0.75);
        const int last = static_cast<int>(S) - 1;
        std::vector<PointPrompt> mx = pts, my = pts, tr = pts;
        for (int i = 0; i < 3; ++i) {
            mx[i].x = last - pts[i].x;
            my[i].y = last - pts[i].y;
            std::swap(tr[i].x, tr[i].y);
        }
        const auto expect_near = [](const Tensor& a, const Tensor& b) {
            for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-6);
        };
        expect_near(dihedral(gt.values, 1), build_gt_map(mx, {S, S}, m, 1, 0.75).values);
        expect_near(dihedral(gt.values, 2), build_gt_map(my, {S, S}, m, 1, 0.75).values);
        expect_near(dihedral(gt.values, 4), build_gt_map(tr, {S, S}, m, 1, 0.75).values);
    }
}

TEST(Training, GradientMatchesFiniteDifferences) {
    const auto cfg = small_config(16, 4);
    std::mt19937_64 rng(21);
    std::vector<TrainingSample> data{random_sample(cfg, rng), random_sample(cfg, rng)};
    PredictorWeights w = PredictorWeights::init(cfg, 8);
    const auto lg = loss_and_gradient(w, cfg, data);

    // probe the ten parameters with the largest gradients so the finite
    // difference is well above float round-off of the loss
    PredictorWeights grad = lg.gradient;
    auto params = all_parameters(w);
    auto grads = all_parameters(grad);
    std::vector<std::size_t> order(params.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::partial_sort(order.begin(), order.begin() + 10, order.end(),
                      [&](std::size_t a, std::size_t b) { return std::abs(*grads[a]) > std::abs(*grads[b]); });
    const double eps = 1e-3;
    for (int k = 0; k < 10; ++k) {
        float& p = *params[order[k]];
        const float saved = p;
        p = static_cast<float>(saved + eps);
        const double up = loss_and_gradient(w, cfg, data).loss;
        p = static_cast<float>(saved - eps);
        const double down = loss_and_gradient(w, cfg, data).loss;
        p = saved;
        const double numeric = (up - down) / (2 * eps);
        const double analytic = *grads[order[k]];
        EXPECT_LE(std::abs(analytic - numeric), 1e-5 + 1e-3 * std::abs(numeric))
            << "parameter " << order[k] << " analytic " << analytic << " numeric " << numeric;
    }
}

TEST(Training, OverfitsSingleSample) {
    const auto cfg = PredictorConfig::for_image(32, 8);
    std::mt19937_64 rng(5);
    std::vector<TrainingSample> data{random_sample(cfg, rng)};
    TrainOptions opts;
    opts.epochs = 200;
    opts.lr = 1e-3;
    opts.batch = 1;
    const auto r = train(PredictorWeights::init(cfg, 2), cfg, data, opts);
    EXPECT_LT(r.loss_history.back(), 0.01);
    const auto pcm = forward(r.weights, cfg, data[0].image, data[0].embedding);
    EXPECT_NEAR(mse(pcm.values, data[0].gt.values), r.loss_history.back(), 0.01);
}

TEST(Training, EmptyDatasetOrBadRateThrows) {
    const auto cfg = small_config();
    TrainOptions opts;
    EXPECT_THROW(train(PredictorWeights::init(cfg, 1), cfg, {}, opts), ConfigError);
    std::mt19937_64 rng(3);
    std::vector<TrainingSample> data{random_sample(cfg, rng)};
    opts.lr = -1.0;
    EXPECT_THROW(train(PredictorWeights::init(cfg, 1), cfg, data, opts), ConfigError);
}

TEST(Training, DivergenceIsReported) {
    const auto cfg = small_config();
    std::mt19937_64 rng(3);
    std::vector<TrainingSample> data{random_sample(cfg, rng)};
    data[0].gt.values[0] = std::numeric_limits<float>::quiet_NaN();
    TrainOptions opts;
    opts.epochs = 1;
    EXPECT_THROW(train(PredictorWeights::init(cfg, 1), cfg, data, opts), TrainingDivergenceError);
}

TEST(WeightsIO, RoundTripIsBitExact) {
    const auto cfg = small_config(32, 6);
    const auto w = PredictorWeights::init(cfg, 12);
    std::stringstream ss;
    write_weights(ss, w);
    const auto back = read_weights(ss);
    EXPECT_TRUE(bitwise_equal(w, back));
    EXPECT_EQ(back.infer_config(8).embed_channels, 6u);
}

TEST(WeightsIO, CorruptMagicThrows) {
    std::stringstream ss;
    write_weights(ss, PredictorWeights::init(small_config(), 1));
    std::string bytes = ss.str();
    bytes[0] = 'Z';
    std::stringstream bad(bytes);
    EXPECT_THROW(read_weights(bad), FormatError);
}

TEST(WeightsIO, TruncatedThrows) {
    std::stringstream ss;
    write_weights(ss, PredictorWeights::init(small_config(), 1));
    std::string bytes = ss.str();
    bytes.resize(bytes.size() / 2);
    std::stringstream bad(bytes);
    EXPECT_THROW(read_weights(bad), FormatError);
}

TEST(WeightsIO, UnknownLayerNameIsNamed) {
    std::stringstream ss;
    write_weights(ss, PredictorWeights::init(small_config(), 1));
    std::string bytes = ss.str();
    const auto pos = bytes.find("img_enc.0.weight");
    ASSERT_NE(pos, std::string::npos);
    bytes.replace(pos, 16, "img_enc.9.weight");
    std::stringstream bad(bytes);
    try {
        read_weights(bad);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("img_enc.9.weight"), std::string::npos);
    }
}
