#include "aop/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "aop/errors.hpp"
#include "aop/ops.hpp"
#include "aop/tensor_io.hpp"

namespace aop {

namespace {

struct LayerPlan {
    const char* name;
    std::size_t c_out;
    std::size_t c_in;  // 0 = embedding channels, 1 = fused channels
    std::size_t kernel;
    int stride;
    int padding;
};

constexpr std::size_t kFromEmbed = 0;
constexpr std::size_t kFromFused = 1;
constexpr std::size_t kEncChannels = 32;

// c_in values 0/1 are placeholders resolved against the config.
constexpr std::array<LayerPlan, kLayerCount> kPlan{{
    {"img_enc.0", 16, 3, 3, 2, 1},
    {"img_enc.1", 32, 16, 3, 2, 1},
    {"img_enc.2", kEncChannels, 32, 3, 1, 1},
    {"vit_enc.0", kEncChannels, kFromEmbed, 1, 1, 0},
    {"dec.0", 32, kFromFused, 3, 1, 1},
    {"dec.1", 16, 32, 3, 1, 1},
    {"dec.2", 1, 16, 1, 1, 0},
}};

constexpr float kOutputPrior = 0.05f;

std::size_t plan_c_in(std::size_t i, const PredictorConfig& cfg) {
    if (i == kVit0) return cfg.embed_channels;
    if (i == kDec0) return cfg.fused_channels;
    return kPlan[i].c_in;
}

Shape weight_shape(std::size_t i, const PredictorConfig& cfg) {
    return {kPlan[i].c_out, plan_c_in(i, cfg), kPlan[i].kernel, kPlan[i].kernel};
}

PredictorWeights empty_weights(const PredictorConfig& cfg) {
    PredictorWeights w;
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        w.layers[i] = ConvLayer{kPlan[i].name, Tensor(weight_shape(i, cfg)), Tensor({kPlan[i].c_out}),
                                kPlan[i].stride, kPlan[i].padding};
    }
    return w;
}

struct Trace {
    Tensor img0, img1, img2, vit0, dec0, dec1, pcm;  // post-activation outputs
};

Trace run_forward(const PredictorWeights& w, const Tensor& image, const Tensor& embedding) {
    auto conv = [&](const Tensor& x, std::size_t i) {
        const ConvLayer& l = w.layers[i];
        return conv2d(x, l.weight, l.bias, l.stride, l.padding);
    };
    Trace t;
    t.img0 = relu(conv(image, kImg0));
    t.img1 = relu(conv(t.img0, kImg1));
    t.img2 = relu(conv(t.img1, kImg2));
    t.vit0 = relu(conv(embedding, kVit0));
    {
        const Tensor fused = concat_channels(t.img2, t.vit0);
        t.dec0 = relu(conv(fused, kDec0));
    }
    t.dec1 = relu(conv(t.dec0, kDec1));
    t.pcm = sigmoid(conv(t.dec1, kDec2));
    return t;
}

void check_inputs(const PredictorConfig& cfg, const Tensor& image, const Tensor& embedding) {
    const Shape img{3, cfg.image_size, cfg.image_size};
    const Shape emb{cfg.embed_channels, cfg.pcm_size, cfg.pcm_size};
    if (image.shape() != img) {
        throw DimensionError("predictor image must be " + shape_str(img) + ", got " + shape_str(image.shape()));
    }
    if (embedding.shape() != emb) {
        throw DimensionError("predictor embedding must be " + shape_str(emb) + ", got " +
                             shape_str(embedding.shape()));
    }
}

void add_into(Tensor& acc, const Tensor& g, float scale = 1.0f) {
    auto a = acc.data();
    auto b = g.data();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += scale * b[i];
}

void accumulate(PredictorWeights& acc, const PredictorWeights& g, float scale = 1.0f) {
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        add_into(acc.layers[i].weight, g.layers[i].weight, scale);
        add_into(acc.layers[i].bias, g.layers[i].bias, scale);
    }
}

void zero(PredictorWeights& w) {
    for (auto& l : w.layers) {
        std::fill(l.weight.data().begin(), l.weight.data().end(), 0.0f);
        std::fill(l.bias.data().begin(), l.bias.data().end(), 0.0f);
    }
}

// Per-sample loss and gradient; the gradient is added into `grad`.
double backprop_sample(const PredictorWeights& w, const TrainingSample& s, PredictorWeights& grad) {
    const Trace t = run_forward(w, s.image, s.embedding);
    const Tensor& target = s.gt.values;
    const std::size_t n = target.size();
    if (t.pcm.size() != n) {
        throw DimensionError("target map " + shape_str(target.shape()) + " does not match prediction " +
                             shape_str(t.pcm.shape()));
    }
    Tensor g_pcm(t.pcm.shape());
    double loss = 0.0;
    const float scale = 2.0f / static_cast<float>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const float d = t.pcm[i] - target[i];
        loss += static_cast<double>(d) * d;
        g_pcm[i] = scale * d;
    }
    loss /= static_cast<double>(n);

    auto back = [&](const Tensor& g_out, const Tensor& input, std::size_t i, bool need_input) {
        const ConvLayer& l = w.layers[i];
        ConvGrads cg = conv2d_backward(g_out, input, l.weight, l.stride, l.padding, need_input);
        add_into(grad.layers[i].weight, cg.weights);
        add_into(grad.layers[i].bias, cg.bias);
        return std::move(cg.input);
    };

    // relu_backward on post-activation outputs: out > 0 exactly when in > 0.
    Tensor g = sigmoid_backward(g_pcm, t.pcm);
    g = relu_backward(back(g, t.dec1, kDec2, true), t.dec1);
    g = relu_backward(back(g, t.dec0, kDec1, true), t.dec0);
    Tensor g_fused;
    {
        const Tensor fused = concat_channels(t.img2, t.vit0);
        g_fused = back(g, fused, kDec0, true);
    }
    const std::size_t split = t.img2.size();
    Tensor g_img2(t.img2.shape(), g_fused.data().subspan(0, split));
    Tensor g_vit0(t.vit0.shape(), g_fused.data().subspan(split));

    back(relu_backward(g_vit0, t.vit0), s.embedding, kVit0, false);
    g = relu_backward(g_img2, t.img2);
    g = relu_backward(back(g, t.img1, kImg2, true), t.img1);
    g = relu_backward(back(g, t.img0, kImg1, true), t.img0);
    back(g, s.image, kImg0, false);
    return loss;
}

} // namespace

void PredictorConfig::validate() const {
    if (pcm_size == 0 || image_size != 4 * pcm_size) {
        throw ConfigError("predictor image_size (" + std::to_string(image_size) + ") must equal 4 x pcm_size (" +
                          std::to_string(pcm_size) + ")");
    }
    if (embed_channels == 0) throw ConfigError("predictor embed_channels must be positive");
    if (fused_channels != 2 * kEncChannels) {
        throw ConfigError("predictor fused_channels must be " + std::to_string(2 * kEncChannels));
    }
}

PredictorConfig PredictorConfig::for_image(std::size_t image_size, std::size_t embed_channels) {
    PredictorConfig cfg;
    cfg.image_size = image_size;
    cfg.pcm_size = image_size / 4;
    cfg.embed_channels = embed_channels;
    cfg.validate();
    return cfg;
}

PredictorWeights PredictorWeights::zeros(const PredictorConfig& cfg) {
    cfg.validate();
    return empty_weights(cfg);
}

PredictorWeights PredictorWeights::init(const PredictorConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    PredictorWeights w = empty_weights(cfg);
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        Tensor& wt = w.layers[i].weight;
        const std::size_t fan_in = wt.dim(1) * wt.dim(2) * wt.dim(3);
        std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
        for (float& v : wt.data()) v = dist(rng);
    }
    w.layers[kDec2].bias[0] = std::log(kOutputPrior / (1.0f - kOutputPrior));
    return w;
}

void PredictorWeights::check(const PredictorConfig& cfg) const {
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        const ConvLayer& l = layers[i];
        const Shape ws = weight_shape(i, cfg);
        if (l.weight.shape() != ws || l.bias.shape() != Shape{kPlan[i].c_out}) {
            throw DimensionError(std::string(kPlan[i].name) + ": expected weight " + shape_str(ws) + ", got " +
                                 shape_str(l.weight.shape()) + " / bias " + shape_str(l.bias.shape()));
        }
        if (!l.weight.all_finite() || !l.bias.all_finite()) {
            throw FormatError(std::string(kPlan[i].name) + " contains non-finite values");
        }
    }
}

std::size_t PredictorWeights::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
}

PredictorConfig PredictorWeights::infer_config(std::size_t pcm_size) const {
    PredictorConfig cfg;
    cfg.pcm_size = pcm_size;
    cfg.image_size = 4 * pcm_size;
    const Tensor& vit = layers[kVit0].weight;
    if (vit.ndim() != 4) throw FormatError("vit_enc.0.weight is not a conv kernel");
    cfg.embed_channels = vit.dim(1);
    cfg.fused_channels = 2 * kEncChannels;
    cfg.validate();
    check(cfg);
    return cfg;
}

bool bitwise_equal(const PredictorWeights& a, const PredictorWeights& b) {
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        if (!bitwise_equal(a.layers[i].weight, b.layers[i].weight) ||
            !bitwise_equal(a.layers[i].bias, b.layers[i].bias)) {
            return false;
        }
    }
    return true;
}

PromptConfidenceMap forward(const PredictorWeights& weights, const PredictorConfig& cfg, const Tensor& image,
                            const Tensor& embedding) {
    cfg.validate();
    check_inputs(cfg, image, embedding);
    Trace t = run_forward(weights, image, embedding);
    return {t.pcm.reshaped({cfg.pcm_size, cfg.pcm_size}), {cfg.image_size, cfg.image_size}};
}

std::size_t image_to_cell(int pixel, std::size_t image_extent, std::size_t grid_extent) {
    const double pos = (static_cast<double>(pixel) + 0.5) * static_cast<double>(grid_extent) /
                       static_cast<double>(image_extent);
    const auto cell = static_cast<std::ptrdiff_t>(std::floor(pos));
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(cell, 0, static_cast<std::ptrdiff_t>(grid_extent) - 1));
}

GroundTruthMap build_gt_map(std::span<const PointPrompt> points, ImageSize image, std::size_t pcm_size,
                            int uniform_radius, double gauss_sigma) {
    Tensor impulses({pcm_size, pcm_size});
    if (points.empty()) return {impulses};
    for (const PointPrompt& p : points) {
        if (p.x < 0 || p.y < 0 || static_cast<std::size_t>(p.x) >= image.w || static_cast<std::size_t>(p.y) >= image.h) {
            throw DimensionError("ground-truth point (" + std::to_string(p.x) + "," + std::to_string(p.y) +
                                 ") outside image");
        }
        impulses(image_to_cell(p.y, image.h, pcm_size), image_to_cell(p.x, image.w, pcm_size)) = 1.0f;
    }
    // Both kernels see a blank (zero) surround.
    const auto n = static_cast<std::ptrdiff_t>(pcm_size);
    const std::ptrdiff_t r = uniform_radius;
    Tensor boxed({pcm_size, pcm_size});
    for (std::ptrdiff_t y = 0; y < n; ++y) {
        for (std::ptrdiff_t x = 0; x < n; ++x) {
            float acc = 0.0f;
            for (std::ptrdiff_t dy = -r; dy <= r; ++dy) {
                const std::ptrdiff_t yy = y + dy;
                if (yy < 0 || yy >= n) continue;
                for (std::ptrdiff_t dx = -r; dx <= r; ++dx) {
                    const std::ptrdiff_t xx = x + dx;
                    if (xx >= 0 && xx < n) acc += impulses(yy, xx);
                }
            }
            boxed(y, x) = acc;
        }
    }
    Tensor smooth = gaussian_filter(boxed, gauss_sigma, Border::zero);
    const float peak = *std::max_element(smooth.data().begin(), smooth.data().end());
    for (float& v : smooth.data()) v /= peak;
    return {std::move(smooth)};
}

double mse(const Tensor& prediction, const Tensor& target) {
    if (prediction.size() != target.size()) throw DimensionError("mse: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double d = static_cast<double>(prediction[i]) - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(target.size());
}

LossAndGradient loss_and_gradient(const PredictorWeights& weights, const PredictorConfig& cfg,
                                  std::span<const TrainingSample> samples) {
    cfg.validate();
    if (samples.empty()) throw ConfigError("loss_and_gradient: no samples");
    LossAndGradient out{0.0, empty_weights(cfg)};
    for (const auto& s : samples) {
        check_inputs(cfg, s.image, s.embedding);
        out.loss += backprop_sample(weights, s, out.gradient);
    }
    const float inv = 1.0f / static_cast<float>(samples.size());
    for (auto& l : out.gradient.layers) {
        for (float& v : l.weight.data()) v *= inv;
        for (float& v : l.bias.data()) v *= inv;
    }
    out.loss /= static_cast<double>(samples.size());
    return out;
}

namespace {

struct AdamState {
    PredictorWeights m, v;
    long step = 0;
};

void adam_update(PredictorWeights& w, const PredictorWeights& g, AdamState& st, const TrainOptions& o) {
    ++st.step;
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(st.step));
    const auto b1 = static_cast<float>(o.beta1), b2 = static_cast<float>(o.beta2);
    const auto lr = static_cast<float>(o.lr), eps = static_cast<float>(o.eps);
    auto update = [&](Tensor& p, const Tensor& grad, Tensor& m, Tensor& v) {
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (1.0f - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0f - b2) * grad[i] * grad[i];
            const auto mhat = static_cast<float>(m[i] / bc1);
            const auto vhat = static_cast<float>(v[i] / bc2);
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    };
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        update(w.layers[i].weight, g.layers[i].weight, st.m.layers[i].weight, st.v.layers[i].weight);
        update(w.layers[i].bias, g.layers[i].bias, st.m.layers[i].bias, st.v.layers[i].bias);
    }
}

TrainingSample augmented(const TrainingSample& s, unsigned code) {
    return {dihedral(s.image, code), dihedral(s.embedding, code), {dihedral(s.gt.values, code)}};
}

} // namespace

TrainResult train(PredictorWeights weights, const PredictorConfig& cfg, std::span<const TrainingSample> dataset,
                  const TrainOptions& opts) {
    cfg.validate();
    weights.check(cfg);
    if (dataset.empty()) throw ConfigError("train: dataset is empty");
    if (!(opts.lr >= 0.0) || opts.batch == 0 || opts.accum_steps == 0 || opts.epochs < 0) {
        throw ConfigError("train: lr must be >= 0, batch and accum_steps >= 1");
    }
    for (const auto& s : dataset) check_inputs(cfg, s.image, s.embedding);

    AdamState st{empty_weights(cfg), empty_weights(cfg)};
    PredictorWeights micro = empty_weights(cfg);  // current micro-batch sum
    PredictorWeights accum = empty_weights(cfg);  // sum of micro-batch means
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(opts.seed);

    TrainResult result;
    result.loss_history.reserve(static_cast<std::size_t>(opts.epochs));
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t in_micro = 0, micro_batches = 0;

        auto flush_micro = [&] {
            if (in_micro == 0) return;
            accumulate(accum, micro, 1.0f / static_cast<float>(in_micro));
            zero(micro);
            in_micro = 0;
            ++micro_batches;
        };
        auto step = [&] {
            if (micro_batches == 0) return;
            const float inv = 1.0f / static_cast<float>(micro_batches);
            for (auto& l : accum.layers) {
                for (float& v : l.weight.data()) v *= inv;
                for (float& v : l.bias.data()) v *= inv;
            }
            adam_update(weights, accum, st, opts);
            zero(accum);
            micro_batches = 0;
        };

        for (std::size_t k = 0; k < order.size(); ++k) {
            const TrainingSample& drawn = dataset[order[k]];
            const double loss = opts.augment ? backprop_sample(weights, augmented(drawn, static_cast<unsigned>(rng() % 8)), micro)
                                             : backprop_sample(weights, drawn, micro);
            if (!std::isfinite(loss)) {
                throw TrainingDivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", sample " +
                                              std::to_string(order[k]) + " (lr " + std::to_string(opts.lr) + ")");
            }
            epoch_loss += loss;
            if (++in_micro == opts.batch) {
                flush_micro();
                if (micro_batches == opts.accum_steps) step();
            }
        }
        flush_micro();
        step();

        epoch_loss /= static_cast<double>(dataset.size());
        result.loss_history.push_back(epoch_loss);
        if (opts.on_epoch) opts.on_epoch(epoch, epoch_loss);
    }
    result.weights = std::move(weights);
    return result;
}

namespace {
constexpr char kWeightsMagic[4] = {'A', 'O', 'P', 'W'};
constexpr std::uint8_t kWeightsVersion = 1;
} // namespace

void write_weights(std::ostream& out, const PredictorWeights& weights) {
    out.write(kWeightsMagic, 4);
    le::put_u8(out, kWeightsVersion);
    le::put_u16(out, static_cast<std::uint16_t>(2 * kLayerCount));
    auto put = [&](const std::string& name, const Tensor& t) {
        le::put_u16(out, static_cast<std::uint16_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_tensor(out, t);
    };
    for (const auto& l : weights.layers) {
        put(l.name + ".weight", l.weight);
        put(l.name + ".bias", l.bias);
    }
}

PredictorWeights read_weights(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4)) throw FormatError("weights: truncated header");
    if (std::memcmp(magic, kWeightsMagic, 4) != 0) throw FormatError("weights: bad magic");
    const std::uint8_t version = le::get_u8(in);
    if (version != kWeightsVersion) throw FormatError("weights: unsupported version " + std::to_string(version));
    const std::uint16_t count = le::get_u16(in);

    std::map<std::string, std::size_t> slots;
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        slots[std::string(kPlan[i].name) + ".weight"] = 2 * i;
        slots[std::string(kPlan[i].name) + ".bias"] = 2 * i + 1;
    }
    std::vector<Tensor> tensors(2 * kLayerCount);
    std::vector<bool> seen(2 * kLayerCount, false);
    for (std::uint16_t k = 0; k < count; ++k) {
        const std::uint16_t len = le::get_u16(in);
        std::string name(len, '\0');
        if (!in.read(name.data(), len)) throw FormatError("weights: truncated layer name");
        const auto it = slots.find(name);
        if (it == slots.end()) throw FormatError("weights: unknown layer '" + name + "'");
        if (seen[it->second]) throw FormatError("weights: duplicate layer '" + name + "'");
        try {
            tensors[it->second] = read_tensor(in);
        } catch (const FormatError& e) {
            throw FormatError("weights: layer '" + name + "': " + e.what());
        }
        seen[it->second] = true;
    }
    for (const auto& [name, slot] : slots) {
        if (!seen[slot]) throw FormatError("weights: missing layer '" + name + "'");
    }
    PredictorWeights w;
    for (std::size_t i = 0; i < kLayerCount; ++i) {
        w.layers[i] = ConvLayer{kPlan[i].name, std::move(tensors[2 * i]), std::move(tensors[2 * i + 1]),
                                kPlan[i].stride, kPlan[i].padding};
    }
    const Tensor& vit = w.layers[kVit0].weight;
    if (vit.ndim() != 4) throw FormatError("weights: vit_enc.0.weight has shape " + shape_str(vit.shape()));
    PredictorConfig cfg;
    cfg.embed_channels = vit.dim(1);
    try {
        w.check(cfg);
    } catch (const DimensionError& e) {
        throw FormatError(std::string("weights: inconsistent shapes: ") + e.what());
    }
    return w;
}

void save_weights(const PredictorWeights& weights, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    write_weights(out, weights);
    if (!out) throw FormatError("failed writing " + path.string());
}

PredictorWeights load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        return read_weights(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace aop
