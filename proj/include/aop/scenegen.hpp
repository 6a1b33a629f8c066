#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aop/predictor.hpp"
#include "aop/provider.hpp"

namespace aop {

struct ShapeMix {
    double rectangle = 1.0;
    double ellipse = 1.0;
    double blob = 1.0;
};

struct SceneSpec {
    std::uint64_t seed = 0;
    std::size_t image_size = 256;
    std::size_t min_regions = 5;
    std::size_t max_regions = 20;
    ShapeMix shapes;
    double nesting_probability = 0.2;
    double min_area_fraction = 0.002;
    double max_extent_fraction = 0.25;  // largest region side relative to the image side
    std::size_t embed_channels = 32;
    double noise_sigma = 0.1;  // embedding noise
    double texture_sigma = 0.03;

    void validate() const;
};

/// Deterministic scene of disjoint top-level regions with optional one-level
/// nesting. Throws GenerationError when a region cannot be placed within 1000
/// attempts.
SyntheticScene generate(const SceneSpec& spec);

/// Sub-seed for the index-th item derived from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

/// Spec for the index-th scene of a suite.
SceneSpec scene_spec_at(const SceneSpec& base, std::size_t index);

/// Embedding seed paired with a scene spec.
std::uint64_t embedding_seed(const SceneSpec& spec);

/// Scenes scene_spec_at(spec, 0..count-1) rendered as predictor training pairs.
/// The kernel arguments go to build_gt_map.
std::vector<TrainingSample> make_training_set(const SceneSpec& spec, std::size_t count, int uniform_radius = 2,
                                              double gauss_sigma = 1.5);

/// Pole of inaccessibility approximation: the pixel of `mask` farthest from
/// any outside pixel (image border counts as outside). Ties go to the pixel
/// closest to the mask centroid, then row-major order.
PointPrompt mask_pole(const Tensor& mask);

} // namespace aop

namespace aop {

/// JSON form of SceneSpec; every key is optional, unknown keys are rejected.
SceneSpec parse_scene_spec(const std::string& json_text);
std::string dump_scene_spec(const SceneSpec& spec);

} // namespace aop
