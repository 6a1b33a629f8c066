#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "aop/prompt.hpp"
#include "aop/tensor.hpp"

namespace aop {

/// Prompt predictor geometry. The image path downsamples twice by 2, so the
/// image side must be four times the confidence-map side, and the embedding
/// grid must equal the confidence-map grid.
struct PredictorConfig {
    std::size_t image_size = 256;
    std::size_t embed_channels = 32;
    std::size_t fused_channels = 64;
    std::size_t pcm_size = 64;

    void validate() const;
    /// Config for a given square image side, pcm_size = image_size / 4.
    static PredictorConfig for_image(std::size_t image_size, std::size_t embed_channels = 32);
};

struct ConvLayer {
    std::string name;
    Tensor weight;  // [C_out,C_in,k,k]
    Tensor bias;    // [C_out]
    int stride = 1;
    int padding = 0;
};

enum LayerIndex : std::size_t { kImg0, kImg1, kImg2, kVit0, kDec0, kDec1, kDec2, kLayerCount };

/// All learnable tensors of the predictor.
///   img_enc: conv 3->16 k3 s2, conv 16->32 k3 s2, conv 32->32 k3 s1 (ReLU each)
///   vit_enc: conv c->32 k1 (ReLU)
///   dec:     conv 64->32 k3, conv 32->16 k3 (ReLU each), conv 16->1 k1, sigmoid
struct PredictorWeights {
    std::array<ConvLayer, kLayerCount> layers;

    /// Kaiming (fan-in) normal weights, zero biases; the output bias starts at
    /// the logit of a small prior so the untrained map is sparse.
    static PredictorWeights init(const PredictorConfig& cfg, std::uint64_t seed);
    static PredictorWeights zeros(const PredictorConfig& cfg);

    /// Throws DimensionError if any tensor disagrees with the layer plan, or
    /// FormatError if a value is non-finite.
    void check(const PredictorConfig& cfg) const;
    std::size_t parameter_count() const;
    /// Recover the config these weights were built for, given the map side.
    PredictorConfig infer_config(std::size_t pcm_size) const;
};

bool bitwise_equal(const PredictorWeights& a, const PredictorWeights& b);

struct PromptConfidenceMap {
    Tensor values;  // [pcm, pcm], in [0,1]
    ImageSize source_image;
};

struct GroundTruthMap {
    Tensor values;  // [pcm, pcm], in [0,1], max 1 when any point exists
};

/// image [3, image_size, image_size] in [0,1]; embedding [c, pcm, pcm].
PromptConfidenceMap forward(const PredictorWeights& weights, const PredictorConfig& cfg, const Tensor& image,
                            const Tensor& embedding);

/// Image pixel -> confidence-map cell (cell containing the pixel center).
std::size_t image_to_cell(int pixel, std::size_t image_extent, std::size_t grid_extent);

/// Dense training target: unit impulses at the prompt cells, smeared by a
/// (2r+1)^2 box kernel and a Gaussian, rescaled to a maximum of 1.
GroundTruthMap build_gt_map(std::span<const PointPrompt> points, ImageSize image, std::size_t pcm_size,
                            int uniform_radius = 2, double gauss_sigma = 1.5);

struct TrainingSample {
    Tensor image;
    Tensor embedding;
    GroundTruthMap gt;
};

struct TrainOptions {
    int epochs = 200;
    double lr = 1e-3;
    std::size_t batch = 8;
    std::size_t accum_steps = 1;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    /// Apply a random flip/transpose to each sample (image, embedding and
    /// target together) every time it is drawn. Needs square inputs.
    bool augment = false;
    /// Called after each epoch with (epoch index, mean loss).
    std::function<void(int, double)> on_epoch;
};

struct TrainResult {
    PredictorWeights weights;
    std::vector<double> loss_history;
};

/// Adam on mean squared error between the predicted map and the target.
/// Micro-batch gradients are averaged over `accum_steps` micro-batches before
/// each update; sample order is reshuffled every epoch from `seed`.
TrainResult train(PredictorWeights weights, const PredictorConfig& cfg, std::span<const TrainingSample> dataset,
                  const TrainOptions& opts);

struct LossAndGradient {
    double loss = 0.0;
    PredictorWeights gradient;
};

/// Mean per-sample MSE over `samples` and its exact gradient.
LossAndGradient loss_and_gradient(const PredictorWeights& weights, const PredictorConfig& cfg,
                                  std::span<const TrainingSample> samples);

double mse(const Tensor& prediction, const Tensor& target);

// Weights file: "AOPW", u8 version (1), u16 tensor count; per tensor: u16 name
// length, UTF-8 name ("img_enc.0.weight", ...), embedded AOPT blob.
void write_weights(std::ostream& out, const PredictorWeights& weights);
PredictorWeights read_weights(std::istream& in);
void save_weights(const PredictorWeights& weights, const std::filesystem::path& path);
PredictorWeights load_weights(const std::filesystem::path& path);

} // namespace aop
