// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The rtpb Authors

#include "rtpb/dataset_io.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rtpb {

nlohmann::json image_to_json(const SceneImage& image) {
  auto objects = nlohmann::json::array();
  for (const auto& p : image.proposals) {
    objects.push_back({{"box", p.box}, {"feat", p.visual_feature}, {"label", p.label}, {"scores", p.detector_scores}});
  }
  auto unions = nlohmann::json::array();
  for (const auto& [pair, feat] : image.union_features) unions.push_back({pair.first, pair.second, feat});
  auto gt = nlohmann::json::array();
  for (const auto& t : image.gt) gt.push_back({t.subject, t.object, t.relation});
  return {{"objects", std::move(objects)}, {"unions", std::move(unions)}, {"gt", std::move(gt)}};
}

SceneImage image_from_json(const nlohmann::json& j) {
  SceneImage image;
  for (const auto& o : j.at("objects")) {
    ObjectProposal p;
    p.box = o.at("box").get<std::array<double, 4>>();
    p.visual_feature = o.at("feat").get<std::vector<double>>();
    p.label = o.at("label").get<int>();
    p.detector_scores = o.at("scores").get<std::vector<double>>();
    if (!(p.box[0] < p.box[2] && p.box[1] < p.box[3])) throw std::invalid_argument("degenerate box");
    image.proposals.push_back(std::move(p));
  }
  const int n = image.num_objects();
  auto check_index = [n](int i) {
    if (i < 0 || i >= n) throw std::invalid_argument("object index " + std::to_string(i) + " out of range");
  };
  for (const auto& u : j.at("unions")) {
    const int s = u.at(0).get<int>();
    const int o = u.at(1).get<int>();
    check_index(s);
    check_index(o);
    image.union_features.emplace(ObjectPair{s, o}, u.at(2).get<std::vector<double>>());
  }
  for (const auto& t : j.at("gt")) {
    PairRelation rel{t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>()};
    check_index(rel.subject);
    check_index(rel.object);
    if (rel.subject == rel.object) throw std::invalid_argument("gt relation on a self pair");
    if (image.relation_of(rel.subject, rel.object) != 0) throw std::invalid_argument("two gt relations on one pair");
    image.gt.push_back(rel);
  }
  return image;
}

void write_images(std::ostream& out, const std::vector<SceneImage>& images) {
  for (const auto& image : images) out << image_to_json(image).dump() << '\n';
}

std::vector<SceneImage> read_images(std::istream& in) {
  std::vector<SceneImage> images;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      images.push_back(image_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::invalid_argument("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return images;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << contents;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  write_file(path, j.dump(2) + "\n");
}

void write_dataset(const std::filesystem::path& dir, const SynthConfig& config, const SynthDataset& data) {
  auto dump = [](const std::vector<SceneImage>& images) {
    std::ostringstream ss;
    write_images(ss, images);
    return ss.str();
  };
  write_file(dir / "train.jsonl", dump(data.train));
  write_file(dir / "val.jsonl", dump(data.val));
  write_file(dir / "test.jsonl", dump(data.test));
  write_json_file(dir / "labels.json", to_json(config.label_space()));
  write_json_file(dir / "synth_config.json", to_json(config));
}

LabelSpace read_labels(const std::filesystem::path& dataset_dir) {
  return label_space_from_json(read_json_file(dataset_dir / "labels.json"));
}

std::vector<SceneImage> read_split(const std::filesystem::path& dataset_dir, const std::string& split) {
  const auto path = dataset_dir / (split + ".jsonl");
  if (!std::filesystem::exists(path)) throw std::runtime_error("split missing: " + path.string());
  std::ifstream in(path, std::ios::binary);
  return read_images(in);
}

}  // namespace rtpb
