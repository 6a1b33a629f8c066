#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aop/prompt.hpp"
#include "aop/tensor.hpp"

namespace aop {

/// Image embedding seen as per-pixel feature vectors.
struct FeatureMap {
    Tensor values;  // [h,w,c]
    ImageSize image;

    std::size_t h() const { return values.dim(0); }
    std::size_t w() const { return values.dim(1); }
    std::size_t c() const { return values.dim(2); }

    /// Build from a channel-first [c,h,w] embedding.
    static FeatureMap from_embedding(const Tensor& chw, ImageSize image);
};

struct MaskRecord {
    Tensor mask;  // [H,W], 0/1
    float iou_confidence = 0.0f;
    float stability = 0.0f;
    int prompt_id = -1;
    bool accepted = false;
};

/// Aggregated redundancy scores over every reference mask seen so far.
struct EliminationMap {
    Tensor values;  // [h,w], means of cosine similarities
    std::size_t n_masks = 0;
    ImageSize image;

    /// Bilinear upsampling to the image resolution.
    Tensor upsampled() const;
    /// upsampled()(y, x) without materializing the full map.
    float score_at(int x, int y) const;
};

enum class ThresholdScope { batch, cumulative };

struct EliminatorConfig {
    double threshold_factor = 1.3;
    std::size_t min_reference_masks = 1;
    bool enabled = true;
    ThresholdScope scope = ThresholdScope::batch;

    void validate() const;
};

/// Nearest-neighbour downsample of an [H,W] mask to [h,w]. When no cell
/// survives, the cell under the mask centroid is set instead.
Tensor downsample_mask(const Tensor& mask, std::size_t h, std::size_t w);

/// Cosine similarity between each normalized pixel feature and the normalized
/// mean feature under the (downsampled) reference mask. Output [h,w].
Tensor per_mask_elimination_map(const FeatureMap& features, const Tensor& mask);

/// Elementwise mean of the per-mask maps.
EliminationMap aggregate(std::span<const Tensor> maps, ImageSize image);

/// Running mean of per-mask maps across batches.
class EliminationAccumulator {
  public:
    EliminationAccumulator(std::size_t h, std::size_t w, ImageSize image);

    void add(const Tensor& map);
    std::size_t count() const { return count_; }
    /// Throws NoReferenceMasksError while empty.
    EliminationMap current() const;

  private:
    std::vector<double> sum_;
    std::size_t h_, w_;
    ImageSize image_;
    std::size_t count_ = 0;
};

/// One processed prompt with the IoU confidence of its accepted mask.
struct ReferencePrompt {
    int x = 0;
    int y = 0;
    float iou_confidence = 0.0f;
};

struct EliminationThreshold {
    double t_elim = 0.0;     // mean of IoU_i * C_i
    double effective = 0.0;  // threshold_factor * t_elim
};

EliminationThreshold elimination_threshold(std::span<const ReferencePrompt> references, const EliminationMap& emap,
                                           const EliminatorConfig& cfg);

/// Move every pending prompt whose score on the upsampled map is strictly above
/// `effective_threshold` to eliminated. Returns the number of eliminations.
std::size_t eliminate(PromptPool& pool, const EliminationMap& emap, double effective_threshold);

} // namespace aop
