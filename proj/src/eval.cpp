#include "aop/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "aop/errors.hpp"

namespace aop {

double mask_iou(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw DimensionError("mask_iou shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::size_t inter = 0, uni = 0;
    const float* pa = a.ptr();
    const float* pb = b.ptr();
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool x = pa[i] > 0.5f, y = pb[i] > 0.5f;
        inter += x && y;
        uni += x || y;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

Matching parse_matching(const std::string& name) {
    if (name == "one2one") return Matching::one2one;
    if (name == "reuse") return Matching::reuse;
    throw ConfigError("unknown matching '" + name + "' (expected one2one or reuse)");
}

std::string to_string(Matching m) { return m == Matching::one2one ? "one2one" : "reuse"; }

double greedy_miou(const std::vector<Tensor>& predicted, const std::vector<Tensor>& ground_truth, Matching matching) {
    if (ground_truth.empty()) throw UndefinedMetricError("greedy mIoU is undefined without ground-truth masks");
    struct Pair {
        double iou;
        std::size_t gt, pred;
    };
    // Predictions tie-break by content rather than list position, so the
    // result does not depend on the order they are passed in.
    std::vector<std::size_t> by_content(predicted.size());
    std::iota(by_content.begin(), by_content.end(), std::size_t{0});
    std::stable_sort(by_content.begin(), by_content.end(), [&](std::size_t a, std::size_t b) {
        const auto da = predicted[a].data(), db = predicted[b].data();
        return std::lexicographical_compare(da.begin(), da.end(), db.begin(), db.end(),
                                            [](float x, float y) { return (x > 0.5f) < (y > 0.5f); });
    });
    std::vector<std::size_t> rank(predicted.size());
    for (std::size_t r = 0; r < by_content.size(); ++r) rank[by_content[r]] = r;

    std::vector<Pair> pairs;
    pairs.reserve(predicted.size() * ground_truth.size());
    for (std::size_t g = 0; g < ground_truth.size(); ++g) {
        for (std::size_t p = 0; p < predicted.size(); ++p) pairs.push_back({mask_iou(predicted[p], ground_truth[g]), g, p});
    }
    std::sort(pairs.begin(), pairs.end(), [&](const Pair& a, const Pair& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.gt != b.gt) return a.gt < b.gt;
        return rank[a.pred] < rank[b.pred];
    });
    std::vector<double> best(ground_truth.size(), 0.0);
    std::vector<bool> gt_used(ground_truth.size(), false), pred_used(predicted.size(), false);
    for (const Pair& pr : pairs) {
        if (gt_used[pr.gt]) continue;
        if (matching == Matching::one2one && pred_used[pr.pred]) continue;
        gt_used[pr.gt] = true;
        pred_used[pr.pred] = true;
        best[pr.gt] = pr.iou;
    }
    double sum = 0.0;
    for (double v : best) sum += v;
    return sum / static_cast<double>(ground_truth.size());
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

LatencyStats latency_stats(const std::vector<double>& values) {
    LatencyStats s;
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    s.p50 = percentile(values, 0.5);
    s.p95 = percentile(values, 0.95);
    return s;
}

std::vector<EvalReport> compare(const std::vector<SceneMetrics>& runs) {
    std::vector<std::string> order;
    for (const auto& r : runs) {
        if (std::find(order.begin(), order.end(), r.method) == order.end()) order.push_back(r.method);
    }
    std::vector<EvalReport> reports;
    std::set<std::string> reference_scenes;
    for (const auto& method : order) {
        EvalReport rep;
        rep.method = method;
        std::vector<double> prompt_lat, mask_lat, total_lat;
        std::size_t eliminated = 0, pool = 0;
        std::set<std::string> seen;
        for (const auto& r : runs) {
            if (r.method != method) continue;
            if (!seen.insert(r.scene).second) throw ConfigError("method " + method + " has two results for scene " + r.scene);
            rep.scenes.push_back(r.scene);
            rep.per_scene_miou.push_back(r.miou);
            rep.miou += r.miou;
            rep.num_prompts += static_cast<double>(r.num_prompts);
            rep.decoder_calls += static_cast<double>(r.decoder_calls);
            rep.num_masks += static_cast<double>(r.num_masks);
            eliminated += r.eliminated;
            pool += r.initial_pool;
            prompt_lat.push_back(r.prompt_latency_s);
            mask_lat.push_back(r.mask_latency_s);
            total_lat.push_back(r.prompt_latency_s + r.mask_latency_s);
            rep.peak_bytes = std::max(rep.peak_bytes, r.peak_bytes);
        }
        if (reports.empty()) {
            reference_scenes = seen;
        } else if (seen != reference_scenes) {
            throw ConfigError("method " + method + " was run on a different scene set than " + reports.front().method);
        }
        const auto n = static_cast<double>(rep.scenes.size());
        rep.miou /= n;
        rep.num_prompts /= n;
        rep.decoder_calls /= n;
        rep.num_masks /= n;
        rep.elimination_ratio = pool ? 100.0 * static_cast<double>(eliminated) / static_cast<double>(pool) : 0.0;
        rep.prompt_latency = latency_stats(prompt_lat);
        rep.mask_latency = latency_stats(mask_lat);
        rep.total_latency = latency_stats(total_lat);
        reports.push_back(std::move(rep));
    }
    return reports;
}

std::string render_table(const std::vector<EvalReport>& reports) {
    std::size_t name_w = 6;
    for (const auto& r : reports) name_w = std::max(name_w, r.method.size());
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof line, "%-*s %8s %12s %12s %8s %10s %10s\n", static_cast<int>(name_w), "Method", "mIoU",
                  "Inf_Lat(s)", "Peak_Mem(MB)", "#P", "Dec_Calls", "Elim(%)");
    out << line;
    out << std::string(name_w + 68, '-') << "\n";
    for (const auto& r : reports) {
        std::snprintf(line, sizeof line, "%-*s %8.1f %12.4f %12.2f %8.1f %10.1f %10.1f\n", static_cast<int>(name_w),
                      r.method.c_str(), 100.0 * r.miou, r.prompt_latency.mean, static_cast<double>(r.peak_bytes) / 1e6,
                      r.num_prompts, r.decoder_calls, r.elimination_ratio);
        out << line;
    }
    return out.str();
}

} // namespace aop
