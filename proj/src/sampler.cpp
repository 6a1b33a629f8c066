#include "aop/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "aop/errors.hpp"
#include "aop/ops.hpp"

namespace aop {

void SamplerConfig::validate() const {
    if (!(smoothing_sigma >= 0.0)) throw ConfigError("sampler smoothing_sigma must be >= 0");
    if (!(intensity_threshold >= 0.0 && intensity_threshold <= 1.0)) {
        throw ConfigError("sampler intensity_threshold must be in [0,1]");
    }
    if (spacing < 1) throw ConfigError("sampler spacing must be >= 1");
}

std::vector<Peak> find_peaks(const Tensor& map, int min_dist, double threshold) {
    if (map.ndim() != 2) throw DimensionError("find_peaks expects [H,W], got " + shape_str(map.shape()));
    if (min_dist < 1) throw ConfigError("find_peaks min_dist must be >= 1");
    const auto h = static_cast<std::ptrdiff_t>(map.dim(0));
    const auto w = static_cast<std::ptrdiff_t>(map.dim(1));
    const std::ptrdiff_t r = min_dist;

    std::vector<Peak> candidates;
    for (std::ptrdiff_t y = 0; y < h; ++y) {
        for (std::ptrdiff_t x = 0; x < w; ++x) {
            const float v = map(y, x);
            if (static_cast<double>(v) < threshold) continue;
            bool is_max = true;
            for (std::ptrdiff_t yy = std::max<std::ptrdiff_t>(0, y - r); is_max && yy <= std::min(h - 1, y + r); ++yy) {
                for (std::ptrdiff_t xx = std::max<std::ptrdiff_t>(0, x - r); xx <= std::min(w - 1, x + r); ++xx) {
                    if (map(yy, xx) > v) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max) candidates.push_back({static_cast<std::size_t>(y), static_cast<std::size_t>(x), v});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Peak& a, const Peak& b) {
        if (a.value != b.value) return a.value > b.value;
        if (a.row != b.row) return a.row < b.row;
        return a.col < b.col;
    });

    std::vector<Peak> kept;
    for (const Peak& c : candidates) {
        const bool clear = std::none_of(kept.begin(), kept.end(), [&](const Peak& k) {
            const auto dy = std::llabs(static_cast<long long>(c.row) - static_cast<long long>(k.row));
            const auto dx = std::llabs(static_cast<long long>(c.col) - static_cast<long long>(k.col));
            return std::max(dy, dx) < min_dist;
        });
        if (clear) kept.push_back(c);
    }
    return kept;
}

int cell_to_image(std::size_t cell, std::size_t grid_extent, std::size_t image_extent) {
    const double pos = (static_cast<double>(cell) + 0.5) * static_cast<double>(image_extent) /
                           static_cast<double>(grid_extent) -
                       0.5;
    const auto px = static_cast<long>(std::lround(pos));
    return static_cast<int>(std::clamp<long>(px, 0, static_cast<long>(image_extent) - 1));
}

PromptPool sample(const PromptConfidenceMap& pcm, const SamplerConfig& cfg, int first_id) {
    cfg.validate();
    if (pcm.values.ndim() != 2) throw DimensionError("sample: confidence map must be [H,W]");
    const Tensor smoothed = gaussian_filter(pcm.values, cfg.smoothing_sigma);
    const std::vector<Peak> peaks = find_peaks(smoothed, cfg.spacing, cfg.intensity_threshold);
    const std::size_t gh = pcm.values.dim(0), gw = pcm.values.dim(1);
    std::vector<PointPrompt> prompts;
    prompts.reserve(peaks.size());
    int id = first_id;
    for (const Peak& p : peaks) {
        PointPrompt pp;
        pp.id = id++;
        pp.x = cell_to_image(p.col, gw, pcm.source_image.w);
        pp.y = cell_to_image(p.row, gh, pcm.source_image.h);
        pp.score = std::clamp(p.value, 0.0f, 1.0f);
        prompts.push_back(pp);
    }
    return PromptPool(std::move(prompts));
}

} // namespace aop
