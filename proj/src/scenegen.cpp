#include "aop/scenegen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include <json.hpp>

#include "aop/errors.hpp"
#include "aop/ops.hpp"

namespace aop {

namespace {

constexpr int kMaxAttempts = 1000;

enum class ShapeKind { rectangle, ellipse, blob };

struct Box {
    int y0, x0, h, w;
};

// Axis-aligned footprint drawn into `mask` ([H,W]); pixels outside `box` are untouched.
void rasterize(ShapeKind kind, const Box& box, std::span<const double> harmonics, Tensor& mask) {
    const std::size_t W = mask.dim(1);
    const double cy = box.y0 + box.h / 2.0, cx = box.x0 + box.w / 2.0;
    const double ry = box.h / 2.0, rx = box.w / 2.0;
    for (int y = box.y0; y < box.y0 + box.h; ++y) {
        for (int x = box.x0; x < box.x0 + box.w; ++x) {
            bool inside = true;
            if (kind != ShapeKind::rectangle) {
                const double dy = (y + 0.5 - cy) / ry, dx = (x + 0.5 - cx) / rx;
                const double r = std::hypot(dy, dx);
                double limit = 1.0;
                if (kind == ShapeKind::blob) {
                    // radius wobble from a few harmonics, kept inside the box
                    const double theta = std::atan2(dy, dx);
                    double wobble = 0.0;
                    for (std::size_t k = 0; k + 1 < harmonics.size(); k += 2) {
                        wobble += harmonics[k] * std::sin((k / 2 + 2) * theta + harmonics[k + 1]);
                    }
                    limit = 0.75 + wobble;
                }
                inside = r <= limit;
            }
            if (inside) mask.ptr()[static_cast<std::size_t>(y) * W + x] = 1.0f;
        }
    }
}

std::size_t area_of(const Tensor& mask) {
    return static_cast<std::size_t>(
        std::count_if(mask.data().begin(), mask.data().end(), [](float v) { return v > 0.5f; }));
}

Tensor dilate(const Tensor& mask, int radius) {
    const auto H = static_cast<int>(mask.dim(0)), W = static_cast<int>(mask.dim(1));
    Tensor out(mask.shape());
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (mask(y, x) <= 0.5f) continue;
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy >= 0 && yy < H && xx >= 0 && xx < W) out(yy, xx) = 1.0f;
                }
            }
        }
    }
    return out;
}

Tensor erode(const Tensor& mask, int radius) {
    Tensor inv(mask.shape());
    for (std::size_t i = 0; i < mask.size(); ++i) inv[i] = mask[i] > 0.5f ? 0.0f : 1.0f;
    Tensor grown = dilate(inv, radius);
    // pixels near the image border count as outside
    const auto H = static_cast<int>(mask.dim(0)), W = static_cast<int>(mask.dim(1));
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            const bool near_border = y < radius || x < radius || y >= H - radius || x >= W - radius;
            grown(y, x) = (grown(y, x) > 0.5f || near_border) ? 0.0f : 1.0f;
        }
    }
    return grown;
}

bool overlaps(const Tensor& a, const Tensor& b) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] > 0.5f && b[i] > 0.5f) return true;
    }
    return false;
}

bool contains(const Tensor& outer, const Tensor& inner) {
    for (std::size_t i = 0; i < inner.size(); ++i) {
        if (inner[i] > 0.5f && outer[i] <= 0.5f) return false;
    }
    return true;
}

// 1-D squared distance transform (lower envelope of parabolas).
void edt_1d(const double* f, double* d, int n, std::vector<int>& v, std::vector<double>& z) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    int k = 0;
    v[0] = 0;
    z[0] = -inf;
    z[1] = inf;
    for (int q = 1; q < n; ++q) {
        if (f[q] == inf) continue;
        if (f[v[k]] == inf) {
            v[k] = q;
            continue;
        }
        double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        while (s <= z[k]) {
            --k;
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = inf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double dq = q - v[k];
        d[q] = f[v[k]] == inf ? inf : dq * dq + f[v[k]];
    }
}

ShapeKind pick_shape(const ShapeMix& mix, std::mt19937_64& rng) {
    std::discrete_distribution<int> dist({mix.rectangle, mix.ellipse, mix.blob});
    return static_cast<ShapeKind>(dist(rng));
}

std::vector<std::vector<float>> unit_features(std::size_t count, std::size_t c, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<std::vector<double>> basis;
    std::vector<std::vector<float>> out;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<double> v(c);
        for (auto& x : v) x = normal(rng);
        // Gram-Schmidt while there is room for an orthogonal direction
        if (basis.size() < c) {
            for (const auto& b : basis) {
                double dot = 0.0;
                for (std::size_t k = 0; k < c; ++k) dot += v[k] * b[k];
                for (std::size_t k = 0; k < c; ++k) v[k] -= dot * b[k];
            }
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        for (auto& x : v) x /= norm;
        if (basis.size() < c) basis.push_back(v);
        out.emplace_back(v.begin(), v.end());
    }
    return out;
}

} // namespace

void SceneSpec::validate() const {
    if (image_size < 8) throw ConfigError("image_size must be at least 8");
    if (min_regions > max_regions) throw ConfigError("region count range is empty");
    if (nesting_probability < 0.0 || nesting_probability > 1.0) throw ConfigError("nesting_probability must be in [0,1]");
    if (shapes.rectangle < 0.0 || shapes.ellipse < 0.0 || shapes.blob < 0.0 ||
        shapes.rectangle + shapes.ellipse + shapes.blob <= 0.0) {
        throw ConfigError("shape mix weights must be non-negative with a positive sum");
    }
    if (min_area_fraction < 0.0 || min_area_fraction > 1.0) throw ConfigError("min_area_fraction must be in [0,1]");
    if (max_extent_fraction <= 0.0 || max_extent_fraction > 1.0) throw ConfigError("max_extent_fraction must be in (0,1]");
    if (embed_channels == 0) throw ConfigError("embed_channels must be positive");
    if (noise_sigma < 0.0 || texture_sigma < 0.0) throw ConfigError("noise levels must be non-negative");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

SceneSpec scene_spec_at(const SceneSpec& base, std::size_t index) {
    SceneSpec s = base;
    s.seed = derive_seed(base.seed, index);
    return s;
}

std::uint64_t embedding_seed(const SceneSpec& spec) { return derive_seed(spec.seed, 0xe3bedULL); }

PointPrompt mask_pole(const Tensor& mask) {
    if (mask.ndim() != 2) throw DimensionError("mask_pole expects [H,W], got " + shape_str(mask.shape()));
    const int H = static_cast<int>(mask.dim(0)), W = static_cast<int>(mask.dim(1));
    // one-pixel frame of background so the image border counts as outside
    const int PH = H + 2, PW = W + 2;
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> grid(static_cast<std::size_t>(PH) * PW, 0.0);
    double sy = 0.0, sx = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (mask(y, x) > 0.5f) {
                grid[static_cast<std::size_t>(y + 1) * PW + x + 1] = inf;
                sy += y;
                sx += x;
                ++n;
            }
        }
    }
    if (n == 0) throw EmptyMaskError("mask_pole: empty mask");
    const int longest = std::max(PH, PW);
    std::vector<double> f(longest), d(longest), z(longest + 1);
    std::vector<int> v(longest);
    for (int x = 0; x < PW; ++x) {
        for (int y = 0; y < PH; ++y) f[y] = grid[static_cast<std::size_t>(y) * PW + x];
        edt_1d(f.data(), d.data(), PH, v, z);
        for (int y = 0; y < PH; ++y) grid[static_cast<std::size_t>(y) * PW + x] = d[y];
    }
    for (int y = 0; y < PH; ++y) {
        double* row = grid.data() + static_cast<std::size_t>(y) * PW;
        std::copy(row, row + PW, f.begin());
        edt_1d(f.data(), d.data(), PW, v, z);
        std::copy(d.begin(), d.begin() + PW, row);
    }
    const double cy = sy / n, cx = sx / n;
    double best = -1.0, best_c = inf;
    int by = 0, bx = 0;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            if (mask(y, x) <= 0.5f) continue;
            const double dist = grid[static_cast<std::size_t>(y + 1) * PW + x + 1];
            const double dc = (y - cy) * (y - cy) + (x - cx) * (x - cx);
            if (dist > best || (dist == best && dc < best_c)) {
                best = dist;
                best_c = dc;
                by = y;
                bx = x;
            }
        }
    }
    PointPrompt p;
    p.x = bx;
    p.y = by;
    p.score = 1.0f;
    return p;
}

SyntheticScene generate(const SceneSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    const auto S = static_cast<int>(spec.image_size);
    const std::size_t pixels = spec.image_size * spec.image_size;
    const auto min_area = static_cast<std::size_t>(std::ceil(spec.min_area_fraction * pixels));
    const int max_side = std::max(2, static_cast<int>(spec.max_extent_fraction * S));
    const int min_side = std::clamp(static_cast<int>(std::ceil(std::sqrt(static_cast<double>(min_area)))), 2, max_side);

    std::uniform_int_distribution<std::size_t> count_dist(spec.min_regions, spec.max_regions);
    const std::size_t n = count_dist(rng);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Tensor> masks;
    std::vector<int> parents;
    std::vector<int> child_count;
    Tensor occupied({spec.image_size, spec.image_size});  // top-level masks grown by the 1 px gap

    auto random_shape = [&](int lo, int hi, int y_lo, int y_hi, int x_lo, int x_hi, ShapeKind& kind) {
        kind = pick_shape(spec.shapes, rng);
        std::uniform_int_distribution<int> side(lo, std::max(lo, hi));
        Box b{};
        b.h = side(rng);
        b.w = side(rng);
        b.y0 = std::uniform_int_distribution<int>(y_lo, std::max(y_lo, y_hi - b.h))(rng);
        b.x0 = std::uniform_int_distribution<int>(x_lo, std::max(x_lo, x_hi - b.w))(rng);
        b.h = std::min(b.h, y_hi - b.y0);
        b.w = std::min(b.w, x_hi - b.x0);
        std::vector<double> harmonics;
        if (kind == ShapeKind::blob) {
            for (int k = 0; k < 3; ++k) {
                harmonics.push_back(unit(rng) * 0.08);
                harmonics.push_back(unit(rng) * 2.0 * std::numbers::pi);
            }
        }
        Tensor m({spec.image_size, spec.image_size});
        if (b.h > 0 && b.w > 0) rasterize(kind, b, harmonics, m);
        return m;
    };

    for (std::size_t r = 0; r < n; ++r) {
        // pick a nesting host among childless top-level regions that can fit a child
        int host = -1;
        if (!masks.empty() && unit(rng) < spec.nesting_probability) {
            std::vector<int> hosts;
            for (std::size_t i = 0; i < masks.size(); ++i) {
                if (parents[i] < 0 && child_count[i] == 0 && area_of(masks[i]) >= 4 * min_area) hosts.push_back(static_cast<int>(i));
            }
            if (!hosts.empty()) host = hosts[std::uniform_int_distribution<std::size_t>(0, hosts.size() - 1)(rng)];
        }

        bool placed = false;
        if (host >= 0) {
            int hy0 = S, hy1 = -1, hx0 = S, hx1 = -1;
            for (int y = 0; y < S; ++y) {
                for (int x = 0; x < S; ++x) {
                    if (masks[host](y, x) > 0.5f) {
                        hy0 = std::min(hy0, y);
                        hy1 = std::max(hy1, y);
                        hx0 = std::min(hx0, x);
                        hx1 = std::max(hx1, x);
                    }
                }
            }
            // keep a band of the parent around the child at least a sixth of its side wide
            const int margin = std::max(2, std::min(hy1 - hy0 + 1, hx1 - hx0 + 1) / 6);
            const Tensor inner = erode(masks[host], margin);
            int y0 = S, y1 = -1, x0 = S, x1 = -1;
            for (int y = 0; y < S; ++y) {
                for (int x = 0; x < S; ++x) {
                    if (inner(y, x) > 0.5f) {
                        y0 = std::min(y0, y);
                        y1 = std::max(y1, y);
                        x0 = std::min(x0, x);
                        x1 = std::max(x1, x);
                    }
                }
            }
            if (y1 >= 0) {
                const int hi = std::max(min_side, std::min(y1 - y0 + 1, x1 - x0 + 1) / 2);
                for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
                    ShapeKind kind;
                    Tensor m = random_shape(min_side, hi, y0, y1 + 1, x0, x1 + 1, kind);
                    if (area_of(m) < std::max<std::size_t>(min_area, 1) || !contains(inner, m)) continue;
                    masks.push_back(std::move(m));
                    parents.push_back(host);
                    child_count.push_back(0);
                    ++child_count[host];
                    placed = true;
                }
            }
            // a host that cannot take a child falls back to a new top-level region
        }
        if (!placed) {
            for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
                // shrink the upper size bound as attempts pile up
                const int hi = std::max(min_side, max_side - (max_side - min_side) * attempt / kMaxAttempts);
                ShapeKind kind;
                Tensor m = random_shape(min_side, hi, 0, S, 0, S, kind);
                if (area_of(m) < std::max<std::size_t>(min_area, 1) || overlaps(m, occupied)) continue;
                const Tensor grown = dilate(m, 1);
                for (std::size_t i = 0; i < grown.size(); ++i) occupied[i] = std::max(occupied[i], grown[i]);
                masks.push_back(std::move(m));
                parents.push_back(-1);
                child_count.push_back(0);
                placed = true;
            }
        }
        if (!placed) {
            throw GenerationError("could not place region " + std::to_string(r) + " of " + std::to_string(n) + " after " +
                                  std::to_string(kMaxAttempts) + " attempts");
        }
    }

    SyntheticScene scene;
    scene.seed = spec.seed;
    auto features = unit_features(masks.size() + 1, spec.embed_channels, rng);
    scene.background_feature = std::move(features[0]);

    std::uniform_real_distribution<double> jitter(-1.0, 1.0);
    for (std::size_t i = 0; i < masks.size(); ++i) {
        Region reg;
        reg.mask = masks[i];
        reg.feature = std::move(features[i + 1]);
        reg.parent = parents[i];
        reg.height = child_count[i] > 0 ? 1 : 0;
        reg.iou_confidence = static_cast<float>(0.95 - 0.05 * reg.height + 0.02 * jitter(rng));
        reg.stability = static_cast<float>(std::clamp(0.9 + 0.05 * jitter(rng), 0.0, 1.0));
        scene.regions.push_back(std::move(reg));
    }
    for (std::size_t i = 0; i < scene.regions.size(); ++i) {
        Tensor exclusive = scene.regions[i].mask;
        for (std::size_t j = 0; j < scene.regions.size(); ++j) {
            if (scene.regions[j].parent != static_cast<int>(i)) continue;
            for (std::size_t k = 0; k < exclusive.size(); ++k) {
                if (scene.regions[j].mask[k] > 0.5f) exclusive[k] = 0.0f;
            }
        }
        PointPrompt p = mask_pole(exclusive);
        p.id = static_cast<int>(i);
        scene.regions[i].gt_prompt = p;
    }

    // render: background, then top-level regions, then children on top
    std::uniform_real_distribution<float> color(0.1f, 0.9f);
    std::normal_distribution<float> texture(0.0f, static_cast<float>(spec.texture_sigma));
    scene.image = Tensor({3, spec.image_size, spec.image_size});
    std::vector<std::array<float, 3>> palette(scene.regions.size() + 1);
    for (auto& c : palette) c = {color(rng), color(rng), color(rng)};
    for (std::size_t y = 0; y < spec.image_size; ++y) {
        for (std::size_t x = 0; x < spec.image_size; ++x) {
            const int r = scene.innermost_region_at(static_cast<int>(x), static_cast<int>(y));
            const auto& c = palette[static_cast<std::size_t>(r + 1)];
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const float t = spec.texture_sigma > 0.0 ? texture(rng) : 0.0f;
                scene.image(ch, y, x) = std::clamp(c[ch] + t, 0.0f, 1.0f);
            }
        }
    }
    return scene;
}

std::vector<TrainingSample> make_training_set(const SceneSpec& spec, std::size_t count, int uniform_radius,
                                              double gauss_sigma) {
    if (count == 0) throw ConfigError("training set count must be at least 1");
    const std::size_t pcm = spec.image_size / 4;
    std::vector<TrainingSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const SceneSpec s = scene_spec_at(spec, i);
        const SyntheticScene scene = generate(s);
        const FeatureMap emb = synth_embedding(scene, s.noise_sigma, embedding_seed(s));
        const auto prompts = scene.gt_prompts();
        out.push_back({scene.image, hwc_to_chw(emb.values), build_gt_map(prompts, scene.size(), pcm, uniform_radius, gauss_sigma)});
    }
    return out;
}

} // namespace aop

namespace aop {

using nlohmann::json;

SceneSpec parse_scene_spec(const std::string& json_text) {
    SceneSpec s;
    try {
        const json j = json::parse(json_text);
        if (!j.is_object()) throw ConfigError("scene spec must be a JSON object");
        static const char* const keys[] = {"seed", "image_size", "min_regions", "max_regions", "shapes", "nesting_probability",
                                           "min_area_fraction", "max_extent_fraction", "embed_channels", "noise_sigma",
                                           "texture_sigma"};
        for (const auto& [key, _] : j.items()) {
            if (std::find(std::begin(keys), std::end(keys), key) == std::end(keys)) {
                throw ConfigError("unknown key '" + key + "' in scene spec");
            }
        }
        s.seed = j.value("seed", s.seed);
        s.image_size = j.value("image_size", s.image_size);
        s.min_regions = j.value("min_regions", s.min_regions);
        s.max_regions = j.value("max_regions", s.max_regions);
        if (j.contains("shapes")) {
            const json& m = j.at("shapes");
            s.shapes.rectangle = m.value("rectangle", s.shapes.rectangle);
            s.shapes.ellipse = m.value("ellipse", s.shapes.ellipse);
            s.shapes.blob = m.value("blob", s.shapes.blob);
        }
        s.nesting_probability = j.value("nesting_probability", s.nesting_probability);
        s.min_area_fraction = j.value("min_area_fraction", s.min_area_fraction);
        s.max_extent_fraction = j.value("max_extent_fraction", s.max_extent_fraction);
        s.embed_channels = j.value("embed_channels", s.embed_channels);
        s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
        s.texture_sigma = j.value("texture_sigma", s.texture_sigma);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("scene spec: ") + e.what());
    }
    s.validate();
    return s;
}

std::string dump_scene_spec(const SceneSpec& s) {
    json j = {{"seed", s.seed},
              {"image_size", s.image_size},
              {"min_regions", s.min_regions},
              {"max_regions", s.max_regions},
              {"shapes", {{"rectangle", s.shapes.rectangle}, {"ellipse", s.shapes.ellipse}, {"blob", s.shapes.blob}}},
              {"nesting_probability", s.nesting_probability},
              {"min_area_fraction", s.min_area_fraction},
              {"max_extent_fraction", s.max_extent_fraction},
              {"embed_channels", s.embed_channels},
              {"noise_sigma", s.noise_sigma},
              {"texture_sigma", s.texture_sigma}};
    return j.dump(2) + "\n";
}

} // namespace aop
