#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aop/eliminator.hpp"
#include "aop/predictor.hpp"
#include "aop/prompt.hpp"
#include "aop/provider.hpp"
#include "aop/sampler.hpp"

namespace aop {

enum class Method { aop, amg_s, amg_d };

Method parse_method(const std::string& name);
std::string to_string(Method m);
/// 16 for amg_s, 32 for amg_d.
std::size_t amg_grid(Method m);

struct PipelineConfig {
    SamplerConfig sampler;
    EliminatorConfig eliminator;
    std::size_t batch_size = 16;
    double iou_conf_min = 0.8;
    double stability_min = 0.85;
    double dedup_iou = 0.9;
    Method method = Method::aop;
    bool multimask = true;
    bool timing = true;                 // false reports zero latencies, for byte-stable output
    std::filesystem::path dump_dir;     // when set, the aggregated elimination map is written per batch as PGM

    void validate() const;
};

/// Every field is optional; missing ones keep their defaults. Unknown keys are
/// rejected with ConfigError.
PipelineConfig parse_pipeline_config(const std::string& json_text);
std::string dump_pipeline_config(const PipelineConfig& cfg);

struct RunResult {
    std::vector<MaskRecord> masks;  // accepted and deduplicated
    std::size_t initial_pool = 0;
    std::size_t prompts_used = 0;   // processed prompts (#P)
    std::size_t decoder_calls = 0;
    std::size_t eliminated = 0;
    std::size_t rejected = 0;       // decoded but failed the quality filter or hit background
    double prompt_latency = 0.0;    // seconds, PCM prediction + sampling
    double mask_latency = 0.0;      // seconds, batched decoding + elimination
    std::size_t peak_bytes = 0;     // tensor high-water mark above the run's starting level

    double elimination_ratio() const;  // percent of the initial pool
};

/// Mask stage shared by every method: batches of pending prompts in score
/// order, candidate selection, quality filter, optional elimination, dedup.
/// Fills everything except prompt_latency and peak_bytes.
RunResult process_pool(PromptPool pool, const MaskProvider& provider, const PipelineConfig& cfg, bool allow_elimination);

/// Full adaptive pipeline. `image` is [3,H,W] at the provider's resolution; it
/// is resized to the predictor's input size when they differ.
RunResult run_aop(const Tensor& image, const MaskProvider& provider, const PredictorWeights& weights,
                  const PipelineConfig& cfg);

/// Point-grid baseline with n*n prompts at cell centers, no elimination.
RunResult run_amg(const MaskProvider& provider, std::size_t grid_n, const PipelineConfig& cfg);

/// Dispatch on cfg.method. `weights` is only read for Method::aop.
RunResult run_method(const Tensor& image, const MaskProvider& provider, const PredictorWeights& weights,
                     const PipelineConfig& cfg);

std::vector<PointPrompt> grid_prompts(ImageSize image, std::size_t n);

/// Greedy mask NMS: sort by iou_confidence descending (stable), keep a mask
/// unless its IoU with an already kept mask exceeds `iou_threshold`.
std::vector<MaskRecord> dedup_masks(std::vector<MaskRecord> masks, double iou_threshold);

} // namespace aop
