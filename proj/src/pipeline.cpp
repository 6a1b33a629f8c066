#include "aop/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include <json.hpp>

#include "aop/errors.hpp"
#include "aop/eval.hpp"
#include "aop/io.hpp"
#include "aop/ops.hpp"

namespace aop {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

} // namespace

Method parse_method(const std::string& name) {
    if (name == "aop") return Method::aop;
    if (name == "amg_s") return Method::amg_s;
    if (name == "amg_d") return Method::amg_d;
    throw ConfigError("unknown method '" + name + "' (expected aop, amg_s or amg_d)");
}

std::string to_string(Method m) {
    switch (m) {
    case Method::aop: return "aop";
    case Method::amg_s: return "amg_s";
    case Method::amg_d: return "amg_d";
    }
    return "?";
}

std::size_t amg_grid(Method m) {
    if (m == Method::amg_s) return 16;
    if (m == Method::amg_d) return 32;
    throw ConfigError("method aop has no grid");
}

void PipelineConfig::validate() const {
    sampler.validate();
    eliminator.validate();
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    auto unit = [](double v, const char* name) {
        if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must be in [0,1]");
    };
    unit(iou_conf_min, "iou_conf_min");
    unit(stability_min, "stability_min");
    unit(dedup_iou, "dedup_iou");
}

PipelineConfig parse_pipeline_config(const std::string& json_text) {
    PipelineConfig cfg;
    try {
        const json j = json::parse(json_text);
        check_keys(j, {"sampler", "eliminator", "batch_size", "iou_conf_min", "stability_min", "dedup_iou", "method", "multimask"},
                   "pipeline config");
        if (j.contains("sampler")) {
            const json& s = j.at("sampler");
            check_keys(s, {"smoothing_sigma", "intensity_threshold", "spacing"}, "sampler");
            read_opt(s, "smoothing_sigma", cfg.sampler.smoothing_sigma);
            read_opt(s, "intensity_threshold", cfg.sampler.intensity_threshold);
            read_opt(s, "spacing", cfg.sampler.spacing);
        }
        if (j.contains("eliminator")) {
            const json& e = j.at("eliminator");
            check_keys(e, {"threshold_factor", "min_reference_masks", "enabled", "scope"}, "eliminator");
            read_opt(e, "threshold_factor", cfg.eliminator.threshold_factor);
            read_opt(e, "min_reference_masks", cfg.eliminator.min_reference_masks);
            read_opt(e, "enabled", cfg.eliminator.enabled);
            if (e.contains("scope")) {
                const auto scope = e.at("scope").get<std::string>();
                if (scope == "batch") cfg.eliminator.scope = ThresholdScope::batch;
                else if (scope == "cumulative") cfg.eliminator.scope = ThresholdScope::cumulative;
                else throw ConfigError("eliminator.scope must be batch or cumulative");
            }
        }
        read_opt(j, "batch_size", cfg.batch_size);
        read_opt(j, "iou_conf_min", cfg.iou_conf_min);
        read_opt(j, "stability_min", cfg.stability_min);
        read_opt(j, "dedup_iou", cfg.dedup_iou);
        read_opt(j, "multimask", cfg.multimask);
        if (j.contains("method")) cfg.method = parse_method(j.at("method").get<std::string>());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("pipeline config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string dump_pipeline_config(const PipelineConfig& cfg) {
    json j = {
        {"sampler",
         {{"smoothing_sigma", cfg.sampler.smoothing_sigma},
          {"intensity_threshold", cfg.sampler.intensity_threshold},
          {"spacing", cfg.sampler.spacing}}},
        {"eliminator",
         {{"threshold_factor", cfg.eliminator.threshold_factor},
          {"min_reference_masks", cfg.eliminator.min_reference_masks},
          {"enabled", cfg.eliminator.enabled},
          {"scope", cfg.eliminator.scope == ThresholdScope::batch ? "batch" : "cumulative"}}},
        {"batch_size", cfg.batch_size},
        {"iou_conf_min", cfg.iou_conf_min},
        {"stability_min", cfg.stability_min},
        {"dedup_iou", cfg.dedup_iou},
        {"method", to_string(cfg.method)},
        {"multimask", cfg.multimask},
    };
    return j.dump(2) + "\n";
}

double RunResult::elimination_ratio() const {
    return initial_pool ? 100.0 * static_cast<double>(eliminated) / static_cast<double>(initial_pool) : 0.0;
}

std::vector<PointPrompt> grid_prompts(ImageSize image, std::size_t n) {
    if (n == 0) throw ConfigError("grid size must be positive");
    std::vector<PointPrompt> out;
    out.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            PointPrompt p;
            p.id = static_cast<int>(i * n + j);
            p.y = static_cast<int>(std::min(image.h - 1, static_cast<std::size_t>((i + 0.5) * image.h / n)));
            p.x = static_cast<int>(std::min(image.w - 1, static_cast<std::size_t>((j + 0.5) * image.w / n)));
            p.score = 1.0f;
            out.push_back(p);
        }
    }
    return out;
}

std::vector<MaskRecord> dedup_masks(std::vector<MaskRecord> masks, double iou_threshold) {
    std::stable_sort(masks.begin(), masks.end(),
                     [](const MaskRecord& a, const MaskRecord& b) { return a.iou_confidence > b.iou_confidence; });
    std::vector<MaskRecord> kept;
    for (auto& m : masks) {
        const bool duplicate = std::any_of(kept.begin(), kept.end(),
                                           [&](const MaskRecord& k) { return mask_iou(k.mask, m.mask) > iou_threshold; });
        if (!duplicate) kept.push_back(std::move(m));
    }
    return kept;
}

RunResult process_pool(PromptPool pool, const MaskProvider& provider, const PipelineConfig& cfg, bool allow_elimination) {
    cfg.validate();
    const auto t0 = Clock::now();
    RunResult result;
    result.initial_pool = pool.size();

    const ImageSize image = provider.image_size();
    const Tensor& emb = provider.embedding();
    if (emb.ndim() != 3) throw DimensionError("provider embedding must be [c,h,w]");
    const bool eliminating = allow_elimination && cfg.eliminator.enabled;
    FeatureMap features;
    if (eliminating) features = FeatureMap::from_embedding(emb, image);
    EliminationAccumulator acc(emb.dim(1), emb.dim(2), image);
    std::vector<ReferencePrompt> all_refs;
    std::vector<MaskRecord> accepted;
    std::size_t iteration = 0;

    while (pool.pending_count() > 0) {
        const auto batch = pool.next_pending(cfg.batch_size);
        std::vector<ReferencePrompt> refs;
        for (std::size_t idx : batch) {
            const PointPrompt& prompt = pool.at(idx);
            MaskProposal proposal;
            try {
                proposal = provider.decode({prompt, cfg.multimask});
            } catch (const std::exception& e) {
                throw ProviderError("decoder failed on prompt " + std::to_string(prompt.id) + " at (" +
                                    std::to_string(prompt.x) + "," + std::to_string(prompt.y) + ") after " +
                                    std::to_string(result.decoder_calls) + " calls, " + std::to_string(accepted.size()) +
                                    " accepted masks: " + e.what());
            }
            ++result.decoder_calls;
            pool.mark_processed(idx);

            auto best = std::max_element(proposal.candidates.begin(), proposal.candidates.end(),
                                         [](const MaskRecord& a, const MaskRecord& b) { return a.iou_confidence < b.iou_confidence; });
            if (best == proposal.candidates.end() || best->iou_confidence < cfg.iou_conf_min ||
                best->stability < cfg.stability_min ||
                std::none_of(best->mask.data().begin(), best->mask.data().end(), [](float v) { return v > 0.5f; })) {
                ++result.rejected;
                continue;
            }
            MaskRecord rec = std::move(*best);
            rec.prompt_id = prompt.id;
            rec.accepted = true;
            if (eliminating) {
                acc.add(per_mask_elimination_map(features, rec.mask));
                refs.push_back({prompt.x, prompt.y, rec.iou_confidence});
            }
            accepted.push_back(std::move(rec));
        }
        all_refs.insert(all_refs.end(), refs.begin(), refs.end());

        if (eliminating && !refs.empty() && acc.count() >= cfg.eliminator.min_reference_masks && pool.pending_count() > 0) {
            const EliminationMap emap = acc.current();
            const auto& scope_refs = cfg.eliminator.scope == ThresholdScope::batch ? refs : all_refs;
            const EliminationThreshold th = elimination_threshold(scope_refs, emap, cfg.eliminator);
            result.eliminated += eliminate(pool, emap, th.effective);
            if (!cfg.dump_dir.empty()) {
                char name[32];
                std::snprintf(name, sizeof name, "emap_%03zu.pgm", iteration);
                write_pgm(cfg.dump_dir / name, emap.values, -1.0f, 1.0f);
            }
        }
        ++iteration;
    }

    result.prompts_used = pool.processed_count();
    result.masks = dedup_masks(std::move(accepted), cfg.dedup_iou);
    result.mask_latency = cfg.timing ? seconds_since(t0) : 0.0;
    return result;
}

RunResult run_aop(const Tensor& image, const MaskProvider& provider, const PredictorWeights& weights,
                  const PipelineConfig& cfg) {
    cfg.validate();
    const std::size_t baseline = alloc::reset_peak();
    const auto t0 = Clock::now();

    const Tensor& emb = provider.embedding();
    if (emb.ndim() != 3 || emb.dim(1) != emb.dim(2)) {
        throw DimensionError("run_aop needs a square [c,h,w] embedding, got " + shape_str(emb.shape()));
    }
    const PredictorConfig pcfg = weights.infer_config(emb.dim(1));
    if (emb.dim(0) != pcfg.embed_channels) {
        throw DimensionError("embedding has " + std::to_string(emb.dim(0)) + " channels but the weights expect " +
                             std::to_string(pcfg.embed_channels));
    }
    const ImageSize size = provider.image_size();
    if (image.ndim() != 3 || image.dim(0) != 3 || image.dim(1) != size.h || image.dim(2) != size.w) {
        throw DimensionError("image " + shape_str(image.shape()) + " does not match the provider's " + std::to_string(size.h) +
                             "x" + std::to_string(size.w));
    }
    PromptConfidenceMap pcm = (size.h == pcfg.image_size && size.w == pcfg.image_size)
                                  ? forward(weights, pcfg, image, emb)
                                  : forward(weights, pcfg, bilinear_resize(image, pcfg.image_size, pcfg.image_size), emb);
    pcm.source_image = size;
    PromptPool pool = sample(pcm, cfg.sampler);
    const double prompt_latency = cfg.timing ? seconds_since(t0) : 0.0;

    RunResult result = process_pool(std::move(pool), provider, cfg, true);
    result.prompt_latency = prompt_latency;
    result.peak_bytes = alloc::stats().peak_bytes - baseline;
    return result;
}

RunResult run_amg(const MaskProvider& provider, std::size_t grid_n, const PipelineConfig& cfg) {
    cfg.validate();
    const std::size_t baseline = alloc::reset_peak();
    const auto t0 = Clock::now();
    PromptPool pool(grid_prompts(provider.image_size(), grid_n));
    const double prompt_latency = cfg.timing ? seconds_since(t0) : 0.0;
    RunResult result = process_pool(std::move(pool), provider, cfg, false);
    result.prompt_latency = prompt_latency;
    result.peak_bytes = alloc::stats().peak_bytes - baseline;
    return result;
}

RunResult run_method(const Tensor& image, const MaskProvider& provider, const PredictorWeights& weights,
                     const PipelineConfig& cfg) {
    if (cfg.method == Method::aop) return run_aop(image, provider, weights, cfg);
    return run_amg(provider, amg_grid(cfg.method), cfg);
}

} // namespace aop
