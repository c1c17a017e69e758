// Copyright 2026 The CoFormer-GSR Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <bit>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "coformer/config.hpp"
#include "coformer/error.hpp"
#include "coformer/train.hpp"
#include "json.hpp"

namespace coformer {

namespace {

using ojson = nlohmann::ordered_json;

constexpr const char* kFormat = "coformer-checkpoint";
constexpr int kVersion = 1;

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix) {
  return std::filesystem::path(prefix.string() + suffix);
}

std::uint32_t to_little_endian(std::uint32_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((x & 0xFFu) << 24) | ((x & 0xFF00u) << 8) | ((x >> 8) & 0xFF00u) | (x >> 24);
  }
  return x;
}

void append(std::vector<std::uint32_t>& buffer, std::span<const float> values) {
  for (float f : values) buffer.push_back(to_little_endian(std::bit_cast<std::uint32_t>(f)));
}

struct Entry {
  Shape shape;
  std::size_t offset = 0;  // bytes
};

}  // namespace

void save_checkpoint(const std::filesystem::path& prefix, Checkpoint& cp) {
  if (prefix.has_parent_path()) std::filesystem::create_directories(prefix.parent_path());
  std::vector<std::uint32_t> buffer;
  ojson tensors = ojson::array();
  auto add = [&](const std::string& name, const Shape& shape, std::span<const float> values) {
    tensors.push_back({{"name", name}, {"shape", shape}, {"dtype", "float32"}, {"offset", buffer.size() * 4}});
    append(buffer, values);
  };
  std::vector<Parameter> params = collect_parameters(cp.weights);
  for (const auto& p : params) add(p.name, p.tensor.shape(), p.tensor.values());
  const bool has_moments = !cp.optimizer.m.empty();
  if (has_moments) {
    if (cp.optimizer.m.size() != params.size()) throw ValidationError("checkpoint: optimizer state size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      add("adam.m." + params[i].name, params[i].tensor.shape(), cp.optimizer.m[i]);
      add("adam.v." + params[i].name, params[i].tensor.shape(), cp.optimizer.v[i]);
    }
  }

  ojson doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  doc["model"] = ojson::parse(to_json(cp.model));
  doc["train"] = ojson::parse(to_json(cp.train));
  doc["loss"] = ojson::parse(to_json(cp.loss));
  doc["ontology"] = ojson::parse(cp.ontology.to_json());
  doc["state"] = {{"step", cp.state.step},
                  {"dropout_seed", cp.state.dropout_seed},
                  {"dropout_counter", cp.state.dropout_counter},
                  {"best_dev_verb", cp.state.best_dev_verb},
                  {"optimizer_step", cp.optimizer.step},
                  {"has_moments", has_moments}};
  doc["binary"] = with_suffix(prefix, ".bin").filename().string();
  doc["bytes"] = buffer.size() * 4;
  doc["content_hash"] = fnv1a64(buffer.data(), buffer.size() * 4);
  doc["tensors"] = std::move(tensors);

  std::ofstream bin(with_suffix(prefix, ".bin"), std::ios::binary);
  if (!bin) throw IoError("cannot write checkpoint " + with_suffix(prefix, ".bin").string());
  bin.write(reinterpret_cast<const char*>(buffer.data()), static_cast<std::streamsize>(buffer.size() * 4));
  std::ofstream manifest(with_suffix(prefix, ".json"));
  if (!manifest) throw IoError("cannot write checkpoint " + with_suffix(prefix, ".json").string());
  manifest << doc.dump(2) << '\n';
  if (!bin || !manifest) throw IoError("short write for checkpoint " + prefix.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& prefix) {
  const auto manifest_path = with_suffix(prefix, ".json");
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot open checkpoint " + manifest_path.string());
  ojson doc;
  try {
    doc = ojson::parse(manifest);
  } catch (const ojson::parse_error& e) {
    throw ValidationError("checkpoint manifest: malformed JSON: " + std::string(e.what()));
  }
  try {
    if (doc.at("format") != kFormat || doc.at("version") != kVersion) {
      throw ValidationError("checkpoint " + manifest_path.string() + ": unsupported format");
    }
    const auto bin_path = manifest_path.parent_path() / doc.at("binary").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw IoError("cannot open checkpoint data " + bin_path.string());
    const auto bytes = doc.at("bytes").get<std::size_t>();
    if (bytes % 4 != 0) throw ValidationError("checkpoint: byte count is not a multiple of 4");
    std::vector<std::uint32_t> buffer(bytes / 4);
    bin.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(bytes));
    if (bin.gcount() != static_cast<std::streamsize>(bytes)) throw IoError("checkpoint data truncated: " + bin_path.string());
    if (fnv1a64(buffer.data(), bytes) != doc.at("content_hash").get<std::uint64_t>()) {
      throw ValidationError("checkpoint data does not match its manifest hash");
    }

    std::unordered_map<std::string, Entry> directory;
    for (const auto& t : doc.at("tensors")) {
      if (t.at("dtype") != "float32") throw ValidationError("checkpoint: unsupported dtype");
      directory[t.at("name").get<std::string>()] = {t.at("shape").get<Shape>(), t.at("offset").get<std::size_t>()};
    }
    auto read = [&](const std::string& name, const Shape& shape, std::span<float> out) {
      const auto it = directory.find(name);
      if (it == directory.end()) throw ValidationError("checkpoint lacks tensor \"" + name + "\"");
      if (it->second.shape != shape) {
        throw ValidationError("checkpoint tensor \"" + name + "\" has shape " + shape_str(it->second.shape) +
                              ", expected " + shape_str(shape));
      }
      const std::size_t first = it->second.offset / 4;
      if (first + out.size() > buffer.size()) throw ValidationError("checkpoint tensor \"" + name + "\" out of range");
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::bit_cast<float>(to_little_endian(buffer[first + i]));
    };

    Checkpoint cp;
    cp.ontology = Ontology::from_json(doc.at("ontology").dump());
    cp.model = model_config_from_json(doc.at("model").dump());
    cp.train = train_config_from_json(doc.at("train").dump());
    cp.loss = loss_config_from_json(doc.at("loss").dump());
    if (cp.model != ModelConfig::for_ontology(cp.ontology, cp.model)) {
      throw ValidationError("checkpoint: model vocabulary sizes disagree with the embedded ontology");
    }
    Rng rng(0);
    cp.weights = CoFormerWeights<float>::create(cp.model, rng);
    std::vector<Parameter> params = collect_parameters(cp.weights);
    for (auto& p : params) read(p.name, p.tensor.shape(), p.tensor.mutable_values());

    const auto& state = doc.at("state");
    cp.state.step = state.at("step").get<std::size_t>();
    cp.state.dropout_seed = state.at("dropout_seed").get<std::uint64_t>();
    cp.state.dropout_counter = state.at("dropout_counter").get<std::uint64_t>();
    cp.state.best_dev_verb = state.at("best_dev_verb").get<double>();
    cp.optimizer.step = state.at("optimizer_step").get<std::size_t>();
    if (state.at("has_moments").get<bool>()) {
      for (const auto& p : params) {
        cp.optimizer.m.emplace_back(p.tensor.numel());
        cp.optimizer.v.emplace_back(p.tensor.numel());
        read("adam.m." + p.name, p.tensor.shape(), cp.optimizer.m.back());
        read("adam.v." + p.name, p.tensor.shape(), cp.optimizer.v.back());
      }
    }
    return cp;
  } catch (const ojson::exception& e) {
    throw ValidationError("checkpoint manifest " + manifest_path.string() + ": " + e.what());
  }
}

}  // namespace coformer
