#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "aop/eliminator.hpp"
#include "aop/prompt.hpp"
#include "aop/tensor.hpp"

namespace aop {

struct MaskQuery {
    PointPrompt prompt;
    bool multimask = true;
};

/// Decoder output for one query: innermost candidate first, then enclosing
/// ones. Empty when the point hits unlabeled background.
struct MaskProposal {
    std::vector<MaskRecord> candidates;
};

/// Stand-in for SAM's prompt encoder + mask decoder, bundled with the image
/// embedding the decoder would consume. One decode() call is one decoder
/// invocation regardless of how many candidates it returns.
class MaskProvider {
  public:
    virtual ~MaskProvider() = default;

    virtual ImageSize image_size() const = 0;
    /// Image embedding, [c,h,w].
    virtual const Tensor& embedding() const = 0;
    virtual MaskProposal decode(const MaskQuery& query) const = 0;
};

struct Region {
    Tensor mask;                  // [H,W], 0/1, includes any nested children
    std::vector<float> feature;   // unit vector, length c
    int parent = -1;              // index of the enclosing region, -1 for top level
    int height = 0;               // 1 when the region has nested children
    PointPrompt gt_prompt;        // interior point of the region's own (exclusive) area
    float iou_confidence = 0.0f;  // what the synthetic decoder reports for this mask
    float stability = 0.0f;
};

struct SyntheticScene {
    std::uint64_t seed = 0;
    Tensor image;  // [3,H,W] in [0,1]
    std::vector<Region> regions;
    std::vector<float> background_feature;

    ImageSize size() const { return {image.dim(1), image.dim(2)}; }
    std::size_t embed_channels() const { return background_feature.size(); }
    std::vector<PointPrompt> gt_prompts() const;
    std::vector<Tensor> gt_masks() const;
    /// Deepest region containing (x, y), or -1 for background.
    int innermost_region_at(int x, int y) const;
};

/// Region-constant features plus Gaussian noise, L2-normalized per cell.
/// Each cell takes the innermost region under its center pixel; background
/// cells use the dedicated background vector. grid = 0 means image_side / 4.
FeatureMap synth_embedding(const SyntheticScene& scene, double noise_sigma, std::uint64_t seed,
                           std::size_t grid = 0);

/// The synthetic decoder: innermost region containing the point, then (when
/// multimask) each enclosing region, with the scores stored on the regions.
MaskProposal oracle_decode(const SyntheticScene& scene, const MaskQuery& query);

class OracleProvider final : public MaskProvider {
  public:
    /// `scene` must outlive the provider.
    OracleProvider(const SyntheticScene& scene, Tensor embedding);

    ImageSize image_size() const override { return scene_.size(); }
    const Tensor& embedding() const override { return embedding_; }
    MaskProposal decode(const MaskQuery& query) const override;

  private:
    const SyntheticScene& scene_;
    Tensor embedding_;
};

struct BankMask {
    std::string file;
    Tensor mask;
    float iou_confidence = 0.0f;
    float stability = 0.0f;
    std::size_t area = 0;
};

/// Precomputed embedding + mask bank read from a directory:
///   embedding.aopt           AOPT [c,h,w]
///   masks/NNN.aopt           AOPT [H,W], values 0/1
///   index.json               {"masks":[{"file","iou","stability"}...], "image_size":[H,W]}
/// Queries return every bank mask containing the point, smallest first.
class FileAdapter final : public MaskProvider {
  public:
    static FileAdapter load(const std::filesystem::path& dir);

    ImageSize image_size() const override { return size_; }
    const Tensor& embedding() const override { return embedding_; }
    MaskProposal decode(const MaskQuery& query) const override;

    const std::vector<BankMask>& bank() const { return bank_; }

  private:
    ImageSize size_;
    Tensor embedding_;
    std::vector<BankMask> bank_;
};

} // namespace aop
