#include "aop/results.hpp"

#include <cstdio>

#include <json.hpp>

#include "aop/errors.hpp"
#include "aop/io.hpp"
#include "aop/tensor_io.hpp"

namespace aop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json latency_json(const LatencyStats& s) { return {{"mean", s.mean}, {"p50", s.p50}, {"p95", s.p95}}; }

LatencyStats latency_from(const json& j) { return {j.at("mean").get<double>(), j.at("p50").get<double>(), j.at("p95").get<double>()}; }

} // namespace

void write_result(const fs::path& out, const std::string& scene, Method method, const RunResult& run) {
    const std::string mask_dir = out.stem().string() + "_masks";
    const fs::path base = out.has_parent_path() ? out.parent_path() : fs::path(".");
    fs::create_directories(base / mask_dir);
    json masks = json::array();
    for (std::size_t i = 0; i < run.masks.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "%03zu.aopt", i);
        const std::string rel = mask_dir + "/" + name;
        save_tensor(base / rel, run.masks[i].mask);
        masks.push_back({{"file", rel},
                         {"iou", run.masks[i].iou_confidence},
                         {"stability", run.masks[i].stability},
                         {"prompt_id", run.masks[i].prompt_id}});
    }
    json j = {
        {"scene", scene},
        {"method", to_string(method)},
        {"masks", masks},
        {"metrics",
         {{"num_prompts", run.prompts_used},
          {"initial_pool", run.initial_pool},
          {"decoder_calls", run.decoder_calls},
          {"eliminated", run.eliminated},
          {"elimination_ratio", run.elimination_ratio()},
          {"num_masks", run.masks.size()},
          {"prompt_latency_s", run.prompt_latency},
          {"mask_latency_s", run.mask_latency},
          {"peak_bytes", run.peak_bytes}}},
    };
    write_text(out, j.dump(2) + "\n");
}

StoredResult read_result(const fs::path& path) {
    StoredResult r;
    const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
    try {
        const json j = json::parse(read_text(path));
        r.scene = j.at("scene").get<std::string>();
        r.method = j.at("method").get<std::string>();
        for (const auto& m : j.at("masks")) {
            MaskRecord rec;
            rec.mask = load_tensor(base / m.at("file").get<std::string>());
            rec.iou_confidence = m.at("iou").get<float>();
            rec.stability = m.at("stability").get<float>();
            rec.prompt_id = m.at("prompt_id").get<int>();
            rec.accepted = true;
            r.masks.push_back(std::move(rec));
        }
        const json& mt = j.at("metrics");
        SceneMetrics& s = r.metrics;
        s.scene = r.scene;
        s.method = r.method;
        s.num_prompts = mt.at("num_prompts").get<std::size_t>();
        s.initial_pool = mt.value("initial_pool", s.num_prompts + mt.at("eliminated").get<std::size_t>());
        s.decoder_calls = mt.at("decoder_calls").get<std::size_t>();
        s.eliminated = mt.at("eliminated").get<std::size_t>();
        s.num_masks = mt.value("num_masks", r.masks.size());
        s.prompt_latency_s = mt.at("prompt_latency_s").get<double>();
        s.mask_latency_s = mt.at("mask_latency_s").get<double>();
        s.peak_bytes = mt.at("peak_bytes").get<std::size_t>();
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return r;
}

std::string reports_to_json(const std::vector<EvalReport>& reports, Matching matching) {
    json methods = json::array();
    for (const auto& r : reports) {
        json scenes = json::array();
        for (std::size_t i = 0; i < r.scenes.size(); ++i) scenes.push_back({{"scene", r.scenes[i]}, {"miou", r.per_scene_miou[i]}});
        methods.push_back({
            {"method", r.method},
            {"miou", r.miou},
            {"per_scene", scenes},
            {"num_prompts", r.num_prompts},
            {"decoder_calls", r.decoder_calls},
            {"num_masks", r.num_masks},
            {"elimination_ratio", r.elimination_ratio},
            {"latency", {{"prompt", latency_json(r.prompt_latency)}, {"mask", latency_json(r.mask_latency)}, {"total", latency_json(r.total_latency)}}},
            {"peak_bytes", r.peak_bytes},
        });
    }
    return json{{"matching", to_string(matching)}, {"methods", methods}}.dump(2) + "\n";
}

std::vector<EvalReport> reports_from_json(const std::string& text) {
    std::vector<EvalReport> out;
    try {
        const json j = json::parse(text);
        for (const auto& m : j.at("methods")) {
            EvalReport r;
            r.method = m.at("method").get<std::string>();
            r.miou = m.at("miou").get<double>();
            for (const auto& s : m.at("per_scene")) {
                r.scenes.push_back(s.at("scene").get<std::string>());
                r.per_scene_miou.push_back(s.at("miou").get<double>());
            }
            r.num_prompts = m.at("num_prompts").get<double>();
            r.decoder_calls = m.at("decoder_calls").get<double>();
            r.num_masks = m.at("num_masks").get<double>();
            r.elimination_ratio = m.at("elimination_ratio").get<double>();
            r.prompt_latency = latency_from(m.at("latency").at("prompt"));
            r.mask_latency = latency_from(m.at("latency").at("mask"));
            r.total_latency = latency_from(m.at("latency").at("total"));
            r.peak_bytes = m.at("peak_bytes").get<std::size_t>();
            out.push_back(std::move(r));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("report: ") + e.what());
    }
    return out;
}

} // namespace aop
