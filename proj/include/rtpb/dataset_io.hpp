// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "rtpb/scene.hpp"
#include "rtpb/stats.hpp"
#include "rtpb/synth.hpp"

namespace rtpb {

/// {"objects":[{"box":[..],"feat":[..],"label":k,"scores":[..]}],
///  "unions":[[s,o,[..]],...], "gt":[[s,o,r],...]}
nlohmann::json image_to_json(const SceneImage& image);
SceneImage image_from_json(const nlohmann::json& j);

/// One compact JSON document per line, in image order.
void write_images(std::ostream& out, const std::vector<SceneImage>& images);
std::vector<SceneImage> read_images(std::istream& in);

/// Writes train/val/test .jsonl, labels.json and synth_config.json into `dir`.
void write_dataset(const std::filesystem::path& dir, const SynthConfig& config, const SynthDataset& data);

LabelSpace read_labels(const std::filesystem::path& dataset_dir);

/// Reads `<dir>/<split>.jsonl`. Throws std::runtime_error("split missing: ...")
/// when the file does not exist.
std::vector<SceneImage> read_split(const std::filesystem::path& dataset_dir, const std::string& split);

std::string read_file(const std::filesystem::path& path);
/// Writes bytes exactly, creating parent directories.
void write_file(const std::filesystem::path& path, const std::string& contents);
nlohmann::json read_json_file(const std::filesystem::path& path);
/// Pretty-printed with two-space indent and a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace rtpb
