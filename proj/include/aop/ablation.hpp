#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aop/eval.hpp"
#include "aop/pipeline.hpp"

namespace aop {

enum class AblationParameter { smoothing_sigma, intensity_threshold, spacing, threshold_factor };

AblationParameter parse_ablation_parameter(const std::string& name);
std::string to_string(AblationParameter p);

struct AblationSpec {
    AblationParameter parameter = AblationParameter::threshold_factor;
    std::vector<double> values;
    PipelineConfig base;

    /// Throws ConfigError when the value list is empty or a value is outside
    /// the parameter's domain.
    void validate() const;
    /// base with `parameter` set to `value`.
    PipelineConfig config_for(double value) const;
};

/// {"parameter": "...", "values": [...], "base": {pipeline config}}
AblationSpec parse_ablation_spec(const std::string& json_text);

/// One evaluation scene: what the pipeline sees plus its ground truth.
struct AblationScene {
    std::string name;
    const Tensor* image = nullptr;
    const MaskProvider* provider = nullptr;
    const std::vector<Tensor>* gt_masks = nullptr;
};

struct AblationRow {
    double value = 0.0;
    double miou = 0.0;
    double mask_latency_s = 0.0;     // mean per scene
    double elimination_ratio = 0.0;  // percent, summed over scenes
    std::size_t peak_bytes = 0;      // max over scenes
    double num_prompts = 0.0;        // mean #P per scene
    double decoder_calls = 0.0;      // mean per scene
    double num_masks = 0.0;          // mean final masks per scene
    double decoder_calls_per_mask = 0.0;
    bool complete = true;
    std::string error;
};

/// Runs the aop pipeline over every scene per value with one set of weights.
/// A failing run stops the sweep; the row it belongs to is returned with
/// complete = false and the error message.
std::vector<AblationRow> run_ablation(const AblationSpec& spec, const std::vector<AblationScene>& scenes,
                                      const PredictorWeights& weights, Matching matching = Matching::one2one);

std::string ablation_to_json(const AblationSpec& spec, const std::vector<AblationRow>& rows);
std::string render_ablation(const AblationSpec& spec, const std::vector<AblationRow>& rows);

} // namespace aop
