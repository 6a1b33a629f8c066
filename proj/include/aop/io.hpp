#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "aop/eliminator.hpp"
#include "aop/provider.hpp"
#include "aop/tensor.hpp"

namespace aop {

/// Binary PPM (P6, maxval 255) from a [3,H,W] image in [0,1].
void write_ppm(const std::filesystem::path& path, const Tensor& image);
/// Binary PPM (P6, maxval < 256) to [3,H,W] in [0,1].
Tensor read_ppm(const std::filesystem::path& path);
/// Binary PGM (P5) of an [H,W] map, linearly scaled from [lo,hi] to 0..255.
void write_pgm(const std::filesystem::path& path, const Tensor& map, float lo = 0.0f, float hi = 1.0f);

/// Writes the adapter layout (embedding.aopt, masks/NNN.aopt, index.json)
/// plus gt_prompts.json and image.ppm.
void write_scene_dir(const std::filesystem::path& dir, const SyntheticScene& scene, const FeatureMap& embedding);

std::vector<PointPrompt> read_gt_prompts(const std::filesystem::path& scene_dir);

/// A scene directory is one holding index.json; a suite directory holds
/// scene directories. Returns sorted scene directories either way.
std::vector<std::filesystem::path> list_scene_dirs(const std::filesystem::path& dir);

std::string read_text(const std::filesystem::path& path);
/// Writes via a temporary file and rename so readers never see a partial file.
void write_text(const std::filesystem::path& path, const std::string& text);

} // namespace aop
