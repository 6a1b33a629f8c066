#include "aop/provider.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <json.hpp>

#include "aop/errors.hpp"
#include "aop/ops.hpp"
#include "aop/tensor_io.hpp"

namespace aop {

std::vector<PointPrompt> SyntheticScene::gt_prompts() const {
    std::vector<PointPrompt> out;
    out.reserve(regions.size());
    for (const auto& r : regions) out.push_back(r.gt_prompt);
    return out;
}

std::vector<Tensor> SyntheticScene::gt_masks() const {
    std::vector<Tensor> out;
    out.reserve(regions.size());
    for (const auto& r : regions) out.push_back(r.mask);
    return out;
}

int SyntheticScene::innermost_region_at(int x, int y) const {
    const ImageSize sz = size();
    if (x < 0 || y < 0 || static_cast<std::size_t>(x) >= sz.w || static_cast<std::size_t>(y) >= sz.h) return -1;
    int best = -1;
    int best_depth = -1;
    for (std::size_t i = 0; i < regions.size(); ++i) {
        if (regions[i].mask(y, x) <= 0.5f) continue;
        const int depth = regions[i].parent < 0 ? 0 : 1;
        if (depth > best_depth) {
            best = static_cast<int>(i);
            best_depth = depth;
        }
    }
    return best;
}

FeatureMap synth_embedding(const SyntheticScene& scene, double noise_sigma, std::uint64_t seed, std::size_t grid) {
    const ImageSize sz = scene.size();
    const std::size_t gh = grid ? grid : sz.h / 4;
    const std::size_t gw = grid ? grid : sz.w / 4;
    const std::size_t c = scene.embed_channels();
    if (gh == 0 || gw == 0 || c == 0) throw DimensionError("synth_embedding: empty grid or feature size");
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.0f, static_cast<float>(noise_sigma));
    Tensor values({gh, gw, c});
    for (std::size_t i = 0; i < gh; ++i) {
        const auto y = static_cast<int>(std::min(sz.h - 1, static_cast<std::size_t>((i + 0.5) * sz.h / gh)));
        for (std::size_t j = 0; j < gw; ++j) {
            const auto x = static_cast<int>(std::min(sz.w - 1, static_cast<std::size_t>((j + 0.5) * sz.w / gw)));
            const int r = scene.innermost_region_at(x, y);
            const std::vector<float>& base = r < 0 ? scene.background_feature : scene.regions[r].feature;
            float* f = values.ptr() + (i * gw + j) * c;
            double sq = 0.0;
            for (std::size_t k = 0; k < c; ++k) {
                f[k] = base[k] + (noise_sigma > 0.0 ? noise(rng) : 0.0f);
                sq += static_cast<double>(f[k]) * f[k];
            }
            const float inv = 1.0f / std::max(static_cast<float>(std::sqrt(sq)), kNormEpsilon);
            for (std::size_t k = 0; k < c; ++k) f[k] *= inv;
        }
    }
    return {std::move(values), sz};
}

MaskProposal oracle_decode(const SyntheticScene& scene, const MaskQuery& query) {
    MaskProposal out;
    int r = scene.innermost_region_at(query.prompt.x, query.prompt.y);
    while (r >= 0) {
        const Region& reg = scene.regions[static_cast<std::size_t>(r)];
        out.candidates.push_back({reg.mask, reg.iou_confidence, reg.stability, query.prompt.id, false});
        if (!query.multimask) break;
        r = reg.parent;
    }
    return out;
}

OracleProvider::OracleProvider(const SyntheticScene& scene, Tensor embedding)
    : scene_(scene), embedding_(std::move(embedding)) {
    if (embedding_.ndim() != 3) throw DimensionError("oracle provider embedding must be [c,h,w]");
}

MaskProposal OracleProvider::decode(const MaskQuery& query) const { return oracle_decode(scene_, query); }

FileAdapter FileAdapter::load(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    using nlohmann::json;
    std::vector<std::string> missing;
    const fs::path emb_path = dir / "embedding.aopt";
    const fs::path index_path = dir / "index.json";
    if (!fs::exists(emb_path)) missing.push_back(emb_path.string());
    if (!fs::exists(index_path)) missing.push_back(index_path.string());
    if (!missing.empty()) {
        std::string msg = "adapter directory " + dir.string() + " is missing:";
        for (const auto& m : missing) msg += " " + m;
        throw FormatError(msg);
    }

    json index;
    {
        std::ifstream in(index_path);
        try {
            index = json::parse(in);
        } catch (const json::exception& e) {
            throw FormatError(index_path.string() + ": " + e.what());
        }
    }
    FileAdapter a;
    try {
        const auto& size = index.at("image_size");
        if (!size.is_array() || size.size() != 2) throw FormatError("image_size must be [H,W]");
        a.size_ = {size.at(0).get<std::size_t>(), size.at(1).get<std::size_t>()};
        for (const auto& entry : index.at("masks")) {
            BankMask m;
            m.file = entry.at("file").get<std::string>();
            m.iou_confidence = entry.at("iou").get<float>();
            m.stability = entry.at("stability").get<float>();
            a.bank_.push_back(std::move(m));
        }
    } catch (const json::exception& e) {
        throw FormatError(index_path.string() + ": " + e.what());
    }
    for (const auto& m : a.bank_) {
        if (!fs::exists(dir / m.file)) missing.push_back((dir / m.file).string());
    }
    if (!missing.empty()) {
        std::string msg = "adapter directory " + dir.string() + " is missing:";
        for (const auto& m : missing) msg += " " + m;
        throw FormatError(msg);
    }

    a.embedding_ = load_tensor(emb_path);
    if (a.embedding_.ndim() != 3) {
        throw FormatError(emb_path.string() + ": embedding must be [c,h,w], got " + shape_str(a.embedding_.shape()));
    }
    for (auto& m : a.bank_) {
        m.mask = load_tensor(dir / m.file);
        if (m.mask.shape() != Shape{a.size_.h, a.size_.w}) {
            throw FormatError(m.file + ": mask shape " + shape_str(m.mask.shape()) + " does not match image_size");
        }
        m.area = static_cast<std::size_t>(
            std::count_if(m.mask.data().begin(), m.mask.data().end(), [](float v) { return v > 0.5f; }));
    }
    return a;
}

MaskProposal FileAdapter::decode(const MaskQuery& query) const {
    MaskProposal out;
    const auto x = query.prompt.x, y = query.prompt.y;
    if (x < 0 || y < 0 || static_cast<std::size_t>(x) >= size_.w || static_cast<std::size_t>(y) >= size_.h) {
        throw ProviderError("query point outside the image");
    }
    std::vector<const BankMask*> hits;
    for (const auto& m : bank_) {
        if (m.mask(y, x) > 0.5f) hits.push_back(&m);
    }
    std::stable_sort(hits.begin(), hits.end(), [](const BankMask* a, const BankMask* b) { return a->area < b->area; });
    for (const BankMask* m : hits) {
        out.candidates.push_back({m->mask, m->iou_confidence, m->stability, query.prompt.id, false});
        if (!query.multimask) break;
    }
    return out;
}

} // namespace aop
