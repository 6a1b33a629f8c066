#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aop/eval.hpp"
#include "aop/pipeline.hpp"

namespace aop {

/// result.json plus a sibling "<stem>_masks/" directory holding one AOPT file
/// per final mask. Mask paths in the JSON are relative to result.json.
void write_result(const std::filesystem::path& out, const std::string& scene, Method method, const RunResult& run);

struct StoredResult {
    std::string scene;
    std::string method;
    std::vector<MaskRecord> masks;
    SceneMetrics metrics;  // miou left at 0 until evaluated
};

StoredResult read_result(const std::filesystem::path& path);

/// report.json body for a set of method reports.
std::string reports_to_json(const std::vector<EvalReport>& reports, Matching matching);
std::vector<EvalReport> reports_from_json(const std::string& text);

} // namespace aop
