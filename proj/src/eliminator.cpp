#include "aop/eliminator.hpp"

#include <cmath>

#include "aop/errors.hpp"
#include "aop/ops.hpp"

namespace aop {

FeatureMap FeatureMap::from_embedding(const Tensor& chw, ImageSize image) {
    if (chw.ndim() != 3) throw DimensionError("embedding must be [c,h,w], got " + shape_str(chw.shape()));
    return {chw_to_hwc(chw), image};
}

Tensor EliminationMap::upsampled() const {
    return bilinear_resize(values.reshaped({1, values.dim(0), values.dim(1)}), image.h, image.w)
        .reshaped({image.h, image.w});
}

float EliminationMap::score_at(int x, int y) const {
    return bilinear_sample_resized(values, image.h, image.w, static_cast<std::size_t>(y),
                                   static_cast<std::size_t>(x));
}

void EliminatorConfig::validate() const {
    if (!(threshold_factor > 0.0)) throw ConfigError("eliminator threshold_factor must be > 0");
}

Tensor downsample_mask(const Tensor& mask, std::size_t h, std::size_t w) {
    if (mask.ndim() != 2) throw DimensionError("downsample_mask expects [H,W]");
    const std::size_t big_h = mask.dim(0), big_w = mask.dim(1);
    Tensor out({h, w});
    bool any = false;
    for (std::size_t i = 0; i < h; ++i) {
        const std::size_t sy = std::min(big_h - 1, static_cast<std::size_t>((static_cast<double>(i) + 0.5) * big_h / h));
        for (std::size_t j = 0; j < w; ++j) {
            const std::size_t sx =
                std::min(big_w - 1, static_cast<std::size_t>((static_cast<double>(j) + 0.5) * big_w / w));
            if (mask(sy, sx) > 0.5f) {
                out(i, j) = 1.0f;
                any = true;
            }
        }
    }
    if (any) return out;

    double sy = 0.0, sx = 0.0;
    std::size_t n = 0;
    for (std::size_t y = 0; y < big_h; ++y) {
        for (std::size_t x = 0; x < big_w; ++x) {
            if (mask(y, x) > 0.5f) {
                sy += static_cast<double>(y);
                sx += static_cast<double>(x);
                ++n;
            }
        }
    }
    if (n == 0) throw EmptyMaskError("reference mask is empty");
    auto cell = [](double c, std::size_t big, std::size_t small) {
        const auto v = static_cast<std::size_t>(std::floor((c + 0.5) * static_cast<double>(small) / big));
        return std::min(v, small - 1);
    };
    out(cell(sy / n, big_h, h), cell(sx / n, big_w, w)) = 1.0f;
    return out;
}

Tensor per_mask_elimination_map(const FeatureMap& features, const Tensor& mask) {
    const Tensor down = downsample_mask(mask, features.h(), features.w());
    const Tensor pooled = l2_normalize_vec(masked_avg_pool(features.values, down));
    const Tensor normed = l2_normalize_pixels(features.values);
    const std::size_t c = features.c();
    Tensor out({features.h(), features.w()});
    for (std::size_t p = 0; p < out.size(); ++p) {
        const float* f = normed.ptr() + p * c;
        float dot = 0.0f;
        for (std::size_t k = 0; k < c; ++k) dot += f[k] * pooled[k];
        out[p] = dot;
    }
    return out;
}

EliminationMap aggregate(std::span<const Tensor> maps, ImageSize image) {
    if (maps.empty()) throw NoReferenceMasksError("aggregate: no per-mask maps");
    EliminationAccumulator acc(maps.front().dim(0), maps.front().dim(1), image);
    for (const Tensor& m : maps) acc.add(m);
    return acc.current();
}

EliminationAccumulator::EliminationAccumulator(std::size_t h, std::size_t w, ImageSize image)
    : sum_(h * w, 0.0), h_(h), w_(w), image_(image) {}

void EliminationAccumulator::add(const Tensor& map) {
    if (map.shape() != Shape{h_, w_}) {
        throw DimensionError("elimination map " + shape_str(map.shape()) + " does not match " + shape_str({h_, w_}));
    }
    for (std::size_t i = 0; i < sum_.size(); ++i) sum_[i] += map[i];
    ++count_;
}

EliminationMap EliminationAccumulator::current() const {
    if (count_ == 0) throw NoReferenceMasksError("no reference masks accumulated");
    Tensor values({h_, w_});
    for (std::size_t i = 0; i < sum_.size(); ++i) values[i] = static_cast<float>(sum_[i] / static_cast<double>(count_));
    return {std::move(values), count_, image_};
}

EliminationThreshold elimination_threshold(std::span<const ReferencePrompt> references, const EliminationMap& emap,
                                           const EliminatorConfig& cfg) {
    if (references.empty()) throw NoReferenceMasksError("elimination_threshold: empty batch");
    double acc = 0.0;
    for (const ReferencePrompt& r : references) {
        if (r.x < 0 || r.y < 0 || static_cast<std::size_t>(r.x) >= emap.image.w ||
            static_cast<std::size_t>(r.y) >= emap.image.h) {
            throw DimensionError("reference prompt outside the image");
        }
        acc += static_cast<double>(r.iou_confidence) * static_cast<double>(emap.score_at(r.x, r.y));
    }
    const double t = acc / static_cast<double>(references.size());
    return {t, cfg.threshold_factor * t};
}

std::size_t eliminate(PromptPool& pool, const EliminationMap& emap, double effective_threshold) {
    std::size_t removed = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const PointPrompt& p = pool.at(i);
        if (p.status != PromptStatus::pending) continue;
        if (static_cast<double>(emap.score_at(p.x, p.y)) > effective_threshold) {
            pool.mark_eliminated(i);
            ++removed;
        }
    }
    return removed;
}

} // namespace aop
