#include "aop/io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "aop/errors.hpp"
#include "aop/ops.hpp"
#include "aop/tensor_io.hpp"

namespace aop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

unsigned char to_byte(float v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

// Next header token of a netpbm file, skipping whitespace and comments.
std::string pnm_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (std::isspace(ch)) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(static_cast<char>(ch));
    }
    return tok;
}

std::size_t pnm_number(std::istream& in, const fs::path& path) {
    const std::string tok = pnm_token(in);
    if (tok.empty() || !std::all_of(tok.begin(), tok.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw FormatError(path.string() + ": bad PPM header");
    }
    return std::stoul(tok);
}

std::string mask_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "masks/%03zu.aopt", i);
    return buf;
}

} // namespace

void write_ppm(const fs::path& path, const Tensor& image) {
    if (image.ndim() != 3 || image.dim(0) != 3) throw DimensionError("write_ppm expects [3,H,W], got " + shape_str(image.shape()));
    const std::size_t H = image.dim(1), W = image.dim(2);
    std::ostringstream out;
    out << "P6\n" << W << " " << H << "\n255\n";
    std::string pixels(3 * H * W, '\0');
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            for (std::size_t c = 0; c < 3; ++c) pixels[3 * (y * W + x) + c] = static_cast<char>(to_byte(image(c, y, x)));
        }
    }
    out << pixels;
    write_text(path, out.str());
}

Tensor read_ppm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    if (pnm_token(in) != "P6") throw FormatError(path.string() + ": not a binary PPM (P6)");
    const std::size_t W = pnm_number(in, path), H = pnm_number(in, path), maxval = pnm_number(in, path);
    if (W == 0 || H == 0 || maxval == 0 || maxval > 255) throw FormatError(path.string() + ": unsupported PPM dimensions or maxval");
    std::string pixels(3 * H * W, '\0');
    in.read(pixels.data(), static_cast<std::streamsize>(pixels.size()));
    if (static_cast<std::size_t>(in.gcount()) != pixels.size()) throw FormatError(path.string() + ": truncated pixel data");
    Tensor image({3, H, W});
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            for (std::size_t c = 0; c < 3; ++c) {
                image(c, y, x) = static_cast<float>(static_cast<unsigned char>(pixels[3 * (y * W + x) + c])) / maxval;
            }
        }
    }
    return image;
}

void write_pgm(const fs::path& path, const Tensor& map, float lo, float hi) {
    if (map.ndim() != 2) throw DimensionError("write_pgm expects [H,W], got " + shape_str(map.shape()));
    if (!(hi > lo)) throw ConfigError("write_pgm: empty value range");
    const std::size_t H = map.dim(0), W = map.dim(1);
    std::ostringstream out;
    out << "P5\n" << W << " " << H << "\n255\n";
    std::string pixels(H * W, '\0');
    for (std::size_t i = 0; i < H * W; ++i) pixels[i] = static_cast<char>(to_byte((map[i] - lo) / (hi - lo)));
    out << pixels;
    write_text(path, out.str());
}

void write_scene_dir(const fs::path& dir, const SyntheticScene& scene, const FeatureMap& embedding) {
    fs::create_directories(dir / "masks");
    save_tensor(dir / "embedding.aopt", hwc_to_chw(embedding.values));
    json masks = json::array();
    json prompts = json::array();
    for (std::size_t i = 0; i < scene.regions.size(); ++i) {
        const Region& r = scene.regions[i];
        const std::string name = mask_name(i);
        save_tensor(dir / name, r.mask);
        masks.push_back({{"file", name}, {"iou", r.iou_confidence}, {"stability", r.stability}});
        prompts.push_back({{"id", r.gt_prompt.id}, {"x", r.gt_prompt.x}, {"y", r.gt_prompt.y}});
    }
    const ImageSize sz = scene.size();
    json index = {{"masks", masks}, {"image_size", {sz.h, sz.w}}};
    write_text(dir / "index.json", index.dump(2) + "\n");
    write_text(dir / "gt_prompts.json", json{{"seed", scene.seed}, {"prompts", prompts}}.dump(2) + "\n");
    write_ppm(dir / "image.ppm", scene.image);
}

std::vector<PointPrompt> read_gt_prompts(const fs::path& scene_dir) {
    const fs::path path = scene_dir / "gt_prompts.json";
    std::vector<PointPrompt> out;
    try {
        const json j = json::parse(read_text(path));
        for (const auto& p : j.at("prompts")) {
            PointPrompt q;
            q.id = p.at("id").get<int>();
            q.x = p.at("x").get<int>();
            q.y = p.at("y").get<int>();
            q.score = 1.0f;
            out.push_back(q);
        }
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return out;
}

std::vector<fs::path> list_scene_dirs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw FormatError(dir.string() + " is not a directory");
    if (fs::exists(dir / "index.json")) return {dir};
    std::vector<fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "index.json")) out.push_back(entry.path());
    }
    if (out.empty()) throw FormatError(dir.string() + " holds no scene directories");
    std::sort(out.begin(), out.end());
    return out;
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + path.string());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw Error("write failed for " + path.string());
    }
    fs::rename(tmp, path);
}

} // namespace aop
