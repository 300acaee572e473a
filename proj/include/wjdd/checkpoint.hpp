// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "wjdd/net.hpp"

namespace wjdd {

// Binary container: "WJDD" magic, u32 LE format version, u64 LE header
// length, UTF-8 JSON header, then the arrays as little-endian scalars in
// manifest order. The header carries {"meta": ..., "arrays": [{name, shape,
// dtype, offset, count}, ...]} with byte offsets relative to the payload
// start. Model weights are stored as "f32"; optimizer state sidecars use
// "f64" so interrupted runs resume bit-exactly.
inline constexpr std::uint32_t kContainerVersion = 1;

struct NamedArray {
    std::string name;
    std::vector<int> shape;
    std::vector<double> data;
    std::string dtype = "f32";  // on-disk precision, "f32" or "f64"
};

struct Container {
    std::uint32_t version = kContainerVersion;
    nlohmann::json meta;
    std::vector<NamedArray> arrays;
};

// Writes atomically (temp file + rename).
void write_container(const std::string& path, const nlohmann::json& meta,
                     const std::vector<NamedArray>& arrays);
Container read_container(const std::string& path);

// Model checkpoints are containers whose meta holds the architecture under
// "net_config" and caller bookkeeping under "training", and whose arrays are
// "<layer>.w" / "<layer>.b" in layer order.
void save_checkpoint(const std::string& path, const Network& net,
                     const nlohmann::json& training_meta);

struct LoadedCheckpoint {
    Network net;
    nlohmann::json training_meta;
};
LoadedCheckpoint load_checkpoint(const std::string& path);

nlohmann::json net_config_to_json(const NetConfig& cfg);
NetConfig net_config_from_json(const nlohmann::json& j);

}  // namespace wjdd
