#pragma once

#include <map>
#include <string>
#include <vector>

#include "aop/tensor.hpp"

namespace aop {

/// |a AND b| / |a OR b| over pixels > 0.5. Two empty masks count as identical
/// (1.0); empty against non-empty is 0.
double mask_iou(const Tensor& a, const Tensor& b);

enum class Matching { one2one, reuse };

Matching parse_matching(const std::string& name);
std::string to_string(Matching m);

/// Mean over ground-truth masks of the IoU of their greedy match (0 when
/// unmatched). Pairs are visited by IoU descending, ties by gt index and then
/// by prediction content, so the order of `predicted` does not matter.
/// one2one uses each prediction at most once; reuse lets every ground-truth
/// mask take its best prediction.
double greedy_miou(const std::vector<Tensor>& predicted, const std::vector<Tensor>& ground_truth,
                   Matching matching = Matching::one2one);

/// Per-scene metrics of one run, as stored in result.json.
struct SceneMetrics {
    std::string scene;
    std::string method;
    double miou = 0.0;
    std::size_t num_prompts = 0;
    std::size_t initial_pool = 0;
    std::size_t decoder_calls = 0;
    std::size_t eliminated = 0;
    std::size_t num_masks = 0;
    double prompt_latency_s = 0.0;
    double mask_latency_s = 0.0;
    std::size_t peak_bytes = 0;
};

struct LatencyStats {
    double mean = 0.0;
    double p50 = 0.0;
    double p95 = 0.0;
};

/// Linear-interpolated percentile, q in [0,1]. Empty input gives 0.
double percentile(std::vector<double> values, double q);
LatencyStats latency_stats(const std::vector<double>& values);

struct EvalReport {
    std::string method;
    double miou = 0.0;
    std::vector<std::string> scenes;
    std::vector<double> per_scene_miou;
    double num_prompts = 0.0;
    double decoder_calls = 0.0;
    double num_masks = 0.0;
    double elimination_ratio = 0.0;  // percent of the initial pools, summed over scenes
    LatencyStats prompt_latency;
    LatencyStats mask_latency;
    LatencyStats total_latency;
    std::size_t peak_bytes = 0;
};

/// Groups per-scene metrics by method (in first-seen order). Every method must
/// cover the same scene set, else ConfigError.
std::vector<EvalReport> compare(const std::vector<SceneMetrics>& runs);

/// Plain-text table: method, mIoU, Inf_Lat, Peak_Mem, #P, then decoder calls
/// and elimination ratio.
std::string render_table(const std::vector<EvalReport>& reports);

} // namespace aop
