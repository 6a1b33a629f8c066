#include "aop/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "aop/errors.hpp"

namespace aop {

using nlohmann::json;

AblationParameter parse_ablation_parameter(const std::string& name) {
    if (name == "smoothing_sigma") return AblationParameter::smoothing_sigma;
    if (name == "intensity_threshold") return AblationParameter::intensity_threshold;
    if (name == "spacing") return AblationParameter::spacing;
    if (name == "threshold_factor") return AblationParameter::threshold_factor;
    throw ConfigError("unknown ablation parameter '" + name + "'");
}

std::string to_string(AblationParameter p) {
    switch (p) {
    case AblationParameter::smoothing_sigma: return "smoothing_sigma";
    case AblationParameter::intensity_threshold: return "intensity_threshold";
    case AblationParameter::spacing: return "spacing";
    case AblationParameter::threshold_factor: return "threshold_factor";
    }
    return "?";
}

PipelineConfig AblationSpec::config_for(double value) const {
    PipelineConfig cfg = base;
    cfg.method = Method::aop;
    switch (parameter) {
    case AblationParameter::smoothing_sigma: cfg.sampler.smoothing_sigma = value; break;
    case AblationParameter::intensity_threshold: cfg.sampler.intensity_threshold = value; break;
    case AblationParameter::spacing: cfg.sampler.spacing = static_cast<int>(value); break;
    case AblationParameter::threshold_factor: cfg.eliminator.threshold_factor = value; break;
    }
    return cfg;
}

void AblationSpec::validate() const {
    if (values.empty()) throw ConfigError("ablation needs at least one value");
    for (double v : values) {
        if (parameter == AblationParameter::spacing && v != std::floor(v)) {
            throw ConfigError("spacing values must be integers");
        }
        config_for(v).validate();
    }
}

AblationSpec parse_ablation_spec(const std::string& json_text) {
    AblationSpec spec;
    try {
        const json j = json::parse(json_text);
        spec.parameter = parse_ablation_parameter(j.at("parameter").get<std::string>());
        spec.values = j.at("values").get<std::vector<double>>();
        if (j.contains("base")) spec.base = parse_pipeline_config(j.at("base").dump());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("ablation spec: ") + e.what());
    }
    spec.validate();
    return spec;
}

std::vector<AblationRow> run_ablation(const AblationSpec& spec, const std::vector<AblationScene>& scenes,
                                      const PredictorWeights& weights, Matching matching) {
    spec.validate();
    if (scenes.empty()) throw ConfigError("ablation needs at least one scene");
    std::vector<AblationRow> rows;
    for (double value : spec.values) {
        AblationRow row;
        row.value = value;
        const PipelineConfig cfg = spec.config_for(value);
        std::size_t eliminated = 0, pool = 0, calls = 0, masks = 0, prompts = 0;
        try {
            for (const auto& s : scenes) {
                const RunResult r = run_aop(*s.image, *s.provider, weights, cfg);
                std::vector<Tensor> predicted;
                for (const auto& m : r.masks) predicted.push_back(m.mask);
                row.miou += greedy_miou(predicted, *s.gt_masks, matching);
                row.mask_latency_s += r.mask_latency;
                row.peak_bytes = std::max(row.peak_bytes, r.peak_bytes);
                eliminated += r.eliminated;
                pool += r.initial_pool;
                calls += r.decoder_calls;
                masks += r.masks.size();
                prompts += r.prompts_used;
            }
        } catch (const std::exception& e) {
            row.complete = false;
            row.error = e.what();
            rows.push_back(std::move(row));
            return rows;
        }
        const auto n = static_cast<double>(scenes.size());
        row.miou /= n;
        row.mask_latency_s /= n;
        row.num_prompts = static_cast<double>(prompts) / n;
        row.decoder_calls = static_cast<double>(calls) / n;
        row.num_masks = static_cast<double>(masks) / n;
        row.elimination_ratio = pool ? 100.0 * static_cast<double>(eliminated) / static_cast<double>(pool) : 0.0;
        row.decoder_calls_per_mask = masks ? static_cast<double>(calls) / static_cast<double>(masks) : 0.0;
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_to_json(const AblationSpec& spec, const std::vector<AblationRow>& rows) {
    json out = json::array();
    for (const auto& r : rows) {
        json row = {{"value", r.value},
                    {"miou", r.miou},
                    {"mask_latency_s", r.mask_latency_s},
                    {"elimination_ratio", r.elimination_ratio},
                    {"peak_bytes", r.peak_bytes},
                    {"num_prompts", r.num_prompts},
                    {"decoder_calls", r.decoder_calls},
                    {"num_masks", r.num_masks},
                    {"decoder_calls_per_mask", r.decoder_calls_per_mask},
                    {"complete", r.complete}};
        if (!r.complete) row["error"] = r.error;
        out.push_back(std::move(row));
    }
    return json{{"parameter", to_string(spec.parameter)}, {"rows", out}}.dump(2) + "\n";
}

std::string render_ablation(const AblationSpec& spec, const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-20s %8s %12s %10s %12s %8s %10s %10s\n", to_string(spec.parameter).c_str(), "mIoU",
                  "Mask_Lat(s)", "Elim(%)", "Peak_Mem(MB)", "#P", "Dec_Calls", "Calls/Mask");
    out << line << std::string(96, '-') << "\n";
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-20g %8.1f %12.4f %10.1f %12.2f %8.1f %10.1f %10.3f%s\n", r.value, 100.0 * r.miou,
                      r.mask_latency_s, r.elimination_ratio, static_cast<double>(r.peak_bytes) / 1e6, r.num_prompts,
                      r.decoder_calls, r.decoder_calls_per_mask, r.complete ? "" : "  (incomplete)");
        out << line;
    }
    return out.str();
}

} // namespace aop
