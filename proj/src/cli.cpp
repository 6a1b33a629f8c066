#include "aop/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <json.hpp>

#include "aop/ablation.hpp"
#include "aop/errors.hpp"
#include "aop/eval.hpp"
#include "aop/io.hpp"
#include "aop/ops.hpp"
#include "aop/pipeline.hpp"
#include "aop/predictor.hpp"
#include "aop/results.hpp"
#include "aop/sampler.hpp"
#include "aop/scenegen.hpp"
#include "aop/tensor_io.hpp"

#ifndef AOP_VERSION
#define AOP_VERSION "0.0.0"
#endif
#ifndef AOP_BUILD_HASH
#define AOP_BUILD_HASH "unknown"
#endif

namespace aop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Option combinations CLI11 cannot express.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Globals {
    std::uint64_t seed = 0;
    bool seed_set = false;
    bool json_out = false;
};

void apply_thread_cap() {
    const char* env = std::getenv("AOP_THREADS");
    if (!env || !*env) return;
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (*end != '\0' || n < 0) throw ConfigError("AOP_THREADS must be a non-negative integer");
    if (n > 0) Eigen::setNbThreads(static_cast<int>(n));
}

void emit(const Globals& g, const json& machine, const std::string& human) {
    if (g.json_out) {
        std::cout << machine.dump(2) << "\n";
    } else {
        std::cout << human;
    }
}

struct LoadedScene {
    std::string name;
    Tensor image;
    FileAdapter adapter;
    std::vector<Tensor> gt;
};

std::string scene_name(const fs::path& dir) {
    fs::path p = dir.lexically_normal();
    if (p.filename().empty()) p = p.parent_path();
    return p.filename().string();
}

LoadedScene load_scene(const fs::path& dir) {
    LoadedScene s;
    s.name = scene_name(dir);
    s.adapter = FileAdapter::load(dir);
    s.image = read_ppm(dir / "image.ppm");
    const ImageSize sz = s.adapter.image_size();
    if (s.image.dim(1) != sz.h || s.image.dim(2) != sz.w) throw FormatError(dir.string() + ": image.ppm does not match index.json");
    for (const auto& m : s.adapter.bank()) s.gt.push_back(m.mask);
    return s;
}


// gen-data ---------------------------------------------------------------

struct GenArgs {
    std::string spec_path;
    std::size_t count = 1;
    std::string out;
};

int cmd_gen(const Globals& g, const GenArgs& a) {
    SceneSpec spec = a.spec_path.empty() ? SceneSpec{} : parse_scene_spec(read_text(a.spec_path));
    if (g.seed_set) spec.seed = g.seed;
    if (a.count < 1) throw ConfigError("--count must be at least 1");
    fs::create_directories(a.out);
    json scenes = json::array();
    for (std::size_t i = 0; i < a.count; ++i) {
        const SceneSpec s = scene_spec_at(spec, i);
        const SyntheticScene scene = generate(s);
        const FeatureMap emb = synth_embedding(scene, s.noise_sigma, embedding_seed(s));
        char name[32];
        std::snprintf(name, sizeof name, "scene_%03zu", i);
        write_scene_dir(fs::path(a.out) / name, scene, emb);
        scenes.push_back({{"name", name}, {"seed", s.seed}, {"regions", scene.regions.size()}});
    }
    write_text(fs::path(a.out) / "suite.json", json{{"spec", json::parse(dump_scene_spec(spec))}, {"scenes", scenes}}.dump(2) + "\n");
    emit(g, json{{"out", a.out}, {"scenes", scenes}}, "wrote " + std::to_string(a.count) + " scenes to " + a.out + "\n");
    return kExitOk;
}

// train ------------------------------------------------------------------

struct TrainArgs {
    std::string data;
    std::string out;
    int epochs = 200;
    double lr = 1e-3;
    std::size_t batch = 8;
    std::size_t accum = 1;
    int gt_radius = 2;
    double gt_sigma = 1.5;
    bool augment = false;
    bool quiet = false;
};

int cmd_train(const Globals& g, const TrainArgs& a) {
    std::vector<TrainingSample> data;
    std::size_t side = 0, channels = 0;
    for (const auto& dir : list_scene_dirs(a.data)) {
        Tensor image = read_ppm(dir / "image.ppm");
        Tensor emb = load_tensor(dir / "embedding.aopt");
        if (image.dim(1) != image.dim(2)) throw FormatError(dir.string() + ": training images must be square");
        if (emb.ndim() != 3) throw FormatError(dir.string() + ": embedding must be [c,h,w]");
        if (side == 0) {
            side = image.dim(1);
            channels = emb.dim(0);
        } else if (image.dim(1) != side || emb.dim(0) != channels) {
            throw FormatError(dir.string() + ": scene size differs from the rest of the training set");
        }
        const ImageSize sz{image.dim(1), image.dim(2)};
        const auto prompts = read_gt_prompts(dir);
        GroundTruthMap gt = build_gt_map(prompts, sz, emb.dim(1), a.gt_radius, a.gt_sigma);
        data.push_back({std::move(image), std::move(emb), std::move(gt)});
    }
    const PredictorConfig cfg = PredictorConfig::for_image(side, channels);
    TrainOptions opts;
    opts.epochs = a.epochs;
    opts.lr = a.lr;
    opts.batch = a.batch;
    opts.accum_steps = a.accum;
    opts.augment = a.augment;
    opts.seed = g.seed;
    if (!a.quiet && !g.json_out) {
        opts.on_epoch = [](int epoch, double loss) { std::fprintf(stderr, "epoch %4d  loss %.6f\n", epoch + 1, loss); };
    }
    TrainResult res = train(PredictorWeights::init(cfg, g.seed), cfg, data, opts);
    save_weights(res.weights, a.out);
    const double final_loss = res.loss_history.empty() ? 0.0 : res.loss_history.back();
    char line[128];
    std::snprintf(line, sizeof line, "trained %zu samples, final loss %.6f\n", data.size(), final_loss);
    emit(g, json{{"out", a.out}, {"samples", data.size()}, {"loss_history", res.loss_history}}, line);
    return kExitOk;
}

// predict ----------------------------------------------------------------

struct PredictArgs {
    std::string scene;
    std::string image;
    std::string embedding;
    std::string weights;
    SamplerConfig sampler;
    std::string out;
    std::string pcm_out;
};

int cmd_predict(const Globals& g, PredictArgs a) {
    if (!a.scene.empty()) {
        if (a.image.empty()) a.image = (fs::path(a.scene) / "image.ppm").string();
        if (a.embedding.empty()) a.embedding = (fs::path(a.scene) / "embedding.aopt").string();
    }
    if (a.image.empty() || a.embedding.empty()) throw UsageError("predict needs --scene or both --image and --embedding");
    a.sampler.validate();
    const PredictorWeights w = load_weights(a.weights);
    Tensor image = read_ppm(a.image);
    const Tensor emb = load_tensor(a.embedding);
    if (emb.ndim() != 3) throw FormatError(a.embedding + ": embedding must be [c,h,w]");
    const PredictorConfig cfg = w.infer_config(emb.dim(1));
    const ImageSize sz{image.dim(1), image.dim(2)};
    if (image.dim(1) != cfg.image_size || image.dim(2) != cfg.image_size) {
        image = bilinear_resize(image, cfg.image_size, cfg.image_size);
    }
    PromptConfidenceMap pcm = forward(w, cfg, image, emb);
    pcm.source_image = sz;
    const PromptPool pool = sample(pcm, a.sampler);
    json prompts = json::array();
    for (const auto& p : pool.prompts()) prompts.push_back({{"id", p.id}, {"x", p.x}, {"y", p.y}, {"score", p.score}});
    write_text(a.out, prompts.dump(2) + "\n");
    if (!a.pcm_out.empty()) write_pgm(a.pcm_out, pcm.values);
    emit(g, json{{"out", a.out}, {"prompts", prompts}}, "wrote " + std::to_string(pool.size()) + " prompts to " + a.out + "\n");
    return kExitOk;
}

// run --------------------------------------------------------------------

struct RunArgs {
    std::string method = "aop";
    std::string scene;
    std::string weights;
    std::string config;
    std::string out;
    std::string dump;
    bool no_timing = false;
};

int cmd_run(const Globals& g, const RunArgs& a) {
    PipelineConfig cfg = a.config.empty() ? PipelineConfig{} : parse_pipeline_config(read_text(a.config));
    cfg.method = parse_method(a.method);
    cfg.timing = !a.no_timing;
    if (!a.dump.empty()) cfg.dump_dir = a.dump;
    if (cfg.method == Method::aop && a.weights.empty()) throw UsageError("--weights is required for method aop");
    const LoadedScene s = load_scene(a.scene);
    const PredictorWeights w = cfg.method == Method::aop ? load_weights(a.weights) : PredictorWeights{};
    const RunResult r = run_method(s.image, s.adapter, w, cfg);
    write_result(a.out, scene_name(a.scene), cfg.method, r);
    char line[256];
    std::snprintf(line, sizeof line, "%s on %s: %zu masks, %zu decoder calls, %zu eliminated (%.1f%%)\n",
                  to_string(cfg.method).c_str(), scene_name(a.scene).c_str(), r.masks.size(), r.decoder_calls, r.eliminated,
                  r.elimination_ratio());
    emit(g,
         json{{"out", a.out},
              {"masks", r.masks.size()},
              {"decoder_calls", r.decoder_calls},
              {"eliminated", r.eliminated},
              {"num_prompts", r.prompts_used}},
         line);
    return kExitOk;
}

// eval / compare ---------------------------------------------------------

struct EvalArgs {
    std::vector<std::string> results;
    std::string gt;
    std::string out;
    std::string matching = "one2one";
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
    const Matching matching = parse_matching(a.matching);
    std::map<std::string, fs::path> scenes;
    for (const auto& dir : list_scene_dirs(a.gt)) scenes[scene_name(dir)] = dir;
    std::map<std::string, std::vector<Tensor>> gt_cache;
    std::vector<SceneMetrics> metrics;
    for (const auto& path : a.results) {
        StoredResult r = read_result(path);
        const auto it = scenes.find(r.scene);
        if (it == scenes.end()) throw ConfigError(path + ": scene '" + r.scene + "' not found under " + a.gt);
        auto cached = gt_cache.find(r.scene);
        if (cached == gt_cache.end()) {
            std::vector<Tensor> gt;
            const FileAdapter adapter = FileAdapter::load(it->second);
            for (const auto& m : adapter.bank()) gt.push_back(m.mask);
            cached = gt_cache.emplace(r.scene, std::move(gt)).first;
        }
        std::vector<Tensor> predicted;
        for (auto& m : r.masks) predicted.push_back(std::move(m.mask));
        r.metrics.miou = greedy_miou(predicted, cached->second, matching);
        metrics.push_back(r.metrics);
    }
    const auto reports = compare(metrics);
    const std::string body = reports_to_json(reports, matching);
    if (!a.out.empty()) write_text(a.out, body);
    emit(g, json::parse(body), render_table(reports));
    return kExitOk;
}

struct CompareArgs {
    std::vector<std::string> reports;
    std::string out;
};

int cmd_compare(const Globals& g, const CompareArgs& a) {
    std::vector<EvalReport> all;
    for (const auto& path : a.reports) {
        auto r = reports_from_json(read_text(path));
        all.insert(all.end(), r.begin(), r.end());
    }
    const std::string table = render_table(all);
    if (!a.out.empty()) write_text(a.out, table);
    emit(g, json::parse(reports_to_json(all, Matching::one2one))["methods"], table);
    return kExitOk;
}

// ablate -----------------------------------------------------------------

struct AblateArgs {
    std::string spec;
    std::string scenes;
    std::string weights;
    std::string out;
    std::string matching = "one2one";
    bool no_timing = false;
};

int cmd_ablate(const Globals& g, const AblateArgs& a) {
    AblationSpec spec = parse_ablation_spec(read_text(a.spec));
    spec.base.timing = !a.no_timing;
    const PredictorWeights w = load_weights(a.weights);
    std::vector<LoadedScene> loaded;
    for (const auto& dir : list_scene_dirs(a.scenes)) {
        loaded.push_back(load_scene(dir));
    }
    std::vector<AblationScene> scenes;
    for (const auto& s : loaded) scenes.push_back({s.name, &s.image, &s.adapter, &s.gt});
    const auto rows = run_ablation(spec, scenes, w, parse_matching(a.matching));
    const std::string body = ablation_to_json(spec, rows);
    if (!a.out.empty()) write_text(a.out, body);
    emit(g, json::parse(body), render_ablation(spec, rows));
    for (const auto& r : rows) {
        if (!r.complete) {
            std::cerr << "ablation aborted at value " << r.value << ": " << r.error << "\n";
            return kExitRuntime;
        }
    }
    return kExitOk;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const UsageError*>(&e)) return kExitUsage;
    if (dynamic_cast<const FormatError*>(&e) || dynamic_cast<const DimensionError*>(&e) ||
        dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UndefinedMetricError*>(&e) ||
        dynamic_cast<const EmptyMaskError*>(&e) || dynamic_cast<const NoReferenceMasksError*>(&e) ||
        dynamic_cast<const fs::filesystem_error*>(&e)) {
        return kExitData;
    }
    return kExitRuntime;
}

} // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Adaptive prompt sampling and filtering for promptable mask generation"};
    app.set_version_flag("--version", std::string("aop ") + AOP_VERSION + " (" + AOP_BUILD_HASH + ")");
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--seed", g.seed, "Seed for every stochastic step (scene generation, weight init, shuffling)")
        ->each([&](const std::string&) { g.seed_set = true; });
    app.add_flag("--json", g.json_out, "Machine-readable output on stdout");

    GenArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Generate synthetic scenes in the adapter layout");
    gen_cmd->add_option("--spec", gen.spec_path, "Scene spec JSON (defaults when omitted)")->check(CLI::ExistingFile);
    gen_cmd->add_option("--count", gen.count, "Number of scenes")->check(CLI::PositiveNumber);
    gen_cmd->add_option("--out", gen.out, "Output directory")->required();

    TrainArgs tr;
    auto* train_cmd = app.add_subcommand("train", "Train the prompt predictor on generated scenes");
    train_cmd->add_option("--data", tr.data, "Scene or suite directory")->required()->check(CLI::ExistingDirectory);
    train_cmd->add_option("--out", tr.out, "Weights file")->required();
    train_cmd->add_option("--epochs", tr.epochs, "Epochs")->check(CLI::PositiveNumber);
    train_cmd->add_option("--lr", tr.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    train_cmd->add_option("--batch", tr.batch, "Micro-batch size")->check(CLI::PositiveNumber);
    train_cmd->add_option("--accum", tr.accum, "Micro-batches per update")->check(CLI::PositiveNumber);
    train_cmd->add_option("--gt-radius", tr.gt_radius, "Box kernel radius of the target maps, in cells")
        ->check(CLI::NonNegativeNumber);
    train_cmd->add_option("--gt-sigma", tr.gt_sigma, "Gaussian sigma of the target maps, in cells")
        ->check(CLI::NonNegativeNumber);
    train_cmd->add_flag("--augment", tr.augment, "Random flips and transposes of each drawn sample");
    train_cmd->add_flag("--quiet", tr.quiet, "No per-epoch progress");

    PredictArgs pr;
    auto* predict_cmd = app.add_subcommand("predict", "Predict a prompt confidence map and sample prompts from it");
    predict_cmd->add_option("--weights", pr.weights, "Weights file")->required()->check(CLI::ExistingFile);
    predict_cmd->add_option("--scene", pr.scene, "Scene directory (supplies image.ppm and embedding.aopt)")
        ->check(CLI::ExistingDirectory);
    predict_cmd->add_option("--image", pr.image, "PPM image")->check(CLI::ExistingFile);
    predict_cmd->add_option("--embedding", pr.embedding, "AOPT embedding [c,h,w]")->check(CLI::ExistingFile);
    predict_cmd->add_option("--sigma", pr.sampler.smoothing_sigma, "Smoothing sigma in map cells");
    predict_cmd->add_option("--thr", pr.sampler.intensity_threshold, "Confidence intensity threshold");
    predict_cmd->add_option("--spacing", pr.sampler.spacing, "Minimum peak spacing in map cells");
    predict_cmd->add_option("--out", pr.out, "prompts.json path")->required();
    predict_cmd->add_option("--pcm-out", pr.pcm_out, "PGM of the confidence map");

    RunArgs ru;
    auto* run_cmd = app.add_subcommand("run", "Generate masks for one scene");
    run_cmd->add_option("--method", ru.method, "aop, amg_s or amg_d")->check(CLI::IsMember({"aop", "amg_s", "amg_d"}));
    run_cmd->add_option("--scene", ru.scene, "Scene directory")->required()->check(CLI::ExistingDirectory);
    run_cmd->add_option("--weights", ru.weights, "Weights file (aop only)")->check(CLI::ExistingFile);
    run_cmd->add_option("--config", ru.config, "Pipeline config JSON")->check(CLI::ExistingFile);
    run_cmd->add_option("--out", ru.out, "result.json path; masks go to <stem>_masks/")->required();
    run_cmd->add_option("--dump-emap", ru.dump, "Directory for per-batch elimination map PGMs");
    run_cmd->add_flag("--no-timing", ru.no_timing, "Report zero latencies so output is byte-stable");

    EvalArgs ev;
    auto* eval_cmd = app.add_subcommand(
        "eval", "Greedy mIoU against ground truth. Two empty masks have IoU 1.0; empty vs non-empty is 0");
    eval_cmd->add_option("--results", ev.results, "result.json files")->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--gt", ev.gt, "Scene or suite directory")->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--out", ev.out, "report.json path");
    eval_cmd->add_option("--matching", ev.matching, "one2one or reuse")->check(CLI::IsMember({"one2one", "reuse"}));

    CompareArgs co;
    auto* compare_cmd = app.add_subcommand("compare", "Render eval reports as a table");
    compare_cmd->add_option("--reports", co.reports, "report.json files")->required()->check(CLI::ExistingFile);
    compare_cmd->add_option("--out", co.out, "Text table path");

    AblateArgs ab;
    auto* ablate_cmd = app.add_subcommand("ablate", "Sweep one pipeline parameter over a scene suite");
    ablate_cmd->add_option("--spec", ab.spec, "Ablation spec JSON")->required()->check(CLI::ExistingFile);
    ablate_cmd->add_option("--scenes", ab.scenes, "Scene or suite directory")->required()->check(CLI::ExistingDirectory);
    ablate_cmd->add_option("--weights", ab.weights, "Weights file")->required()->check(CLI::ExistingFile);
    ablate_cmd->add_option("--out", ab.out, "ablation.json path");
    ablate_cmd->add_option("--matching", ab.matching, "one2one or reuse")->check(CLI::IsMember({"one2one", "reuse"}));
    ablate_cmd->add_flag("--no-timing", ab.no_timing, "Report zero latencies");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        apply_thread_cap();
        if (*gen_cmd) return cmd_gen(g, gen);
        if (*train_cmd) return cmd_train(g, tr);
        if (*predict_cmd) return cmd_predict(g, pr);
        if (*run_cmd) return cmd_run(g, ru);
        if (*eval_cmd) return cmd_eval(g, ev);
        if (*compare_cmd) return cmd_compare(g, co);
        if (*ablate_cmd) return cmd_ablate(g, ab);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
    return kExitUsage;
}

} // namespace aop
