#pragma once

#include <cstddef>
#include <vector>

#include "aop/predictor.hpp"
#include "aop/prompt.hpp"
#include "aop/tensor.hpp"

namespace aop {

struct SamplerConfig {
    double smoothing_sigma = 2.0;      // Gaussian sigma in map cells
    double intensity_threshold = 0.2;  // absolute floor on the smoothed map
    int spacing = 2;                   // minimum Chebyshev distance between peaks, in cells

    void validate() const;
};

struct Peak {
    std::size_t row = 0;
    std::size_t col = 0;
    float value = 0.0f;
};

/// Local maxima of `map` ([H,W]). A cell is a candidate when it is >= every
/// value in its (2*min_dist+1)^2 window (clipped at the border) and >=
/// threshold. Candidates are visited by value descending, then (row, col)
/// ascending, and kept only when their Chebyshev distance to every kept peak
/// is at least min_dist.
std::vector<Peak> find_peaks(const Tensor& map, int min_dist, double threshold);

/// Map cell index -> pixel index of the cell center,
/// round((cell + 0.5) * image / grid - 0.5), clamped to the image.
int cell_to_image(std::size_t cell, std::size_t grid_extent, std::size_t image_extent);

/// Smooth the confidence map, detect peaks and emit them as pending prompts in
/// original-image coordinates. Prompt scores are the smoothed peak values and
/// ids are assigned in score order starting at `first_id`.
PromptPool sample(const PromptConfidenceMap& pcm, const SamplerConfig& cfg, int first_id = 0);

} // namespace aop
