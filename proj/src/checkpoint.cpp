// Copyright (c) 2026 wjdd contributors
// SPDX-License-Identifier: Apache-2.0

#include "wjdd/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

#include "wjdd/common.hpp"

namespace wjdd {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(const unsigned char* p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

std::size_t shape_count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 1) throw ValidationError("array shape dims must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

}  // namespace

void write_container(const std::string& path, const nlohmann::json& meta,
                     const std::vector<NamedArray>& arrays) {
    nlohmann::json manifest = nlohmann::json::array();
    std::size_t offset = 0;
    for (const NamedArray& a : arrays) {
        const std::size_t n = shape_count(a.shape);
        if (n != a.data.size())
            throw ValidationError("array '" + a.name + "' shape does not match its data");
        if (a.dtype != "f32" && a.dtype != "f64")
            throw ValidationError("array '" + a.name + "' has unsupported dtype " + a.dtype);
        manifest.push_back({{"name", a.name},
                            {"shape", a.shape},
                            {"dtype", a.dtype},
                            {"offset", offset},
                            {"count", n}});
        offset += n * (a.dtype == "f64" ? 8 : 4);
    }
    const nlohmann::json header = {{"meta", meta}, {"arrays", manifest}};
    const std::string header_str = header.dump();

    std::string blob;
    blob.reserve(16 + header_str.size() + offset);
    blob += "WJDD";
    put_u32(blob, kContainerVersion);
    put_u64(blob, header_str.size());
    blob += header_str;
    for (const NamedArray& a : arrays) {
        if (a.dtype == "f64") {
            for (double d : a.data) {
                std::uint64_t bits;
                std::memcpy(&bits, &d, 8);
                put_u64(blob, bits);
            }
        } else {
            for (double d : a.data) {
                const float f = static_cast<float>(d);
                std::uint32_t bits;
                std::memcpy(&bits, &f, 4);
                put_u32(blob, bits);
            }
        }
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
        if (!out) {
            out.close();
            std::remove(tmp.c_str());
            throw IoError("short write to '" + tmp + "'");
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw IoError("cannot rename '" + tmp + "' to '" + path + "'");
    }
}

Container read_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const unsigned char* p = reinterpret_cast<const unsigned char*>(blob.data());

    if (blob.size() < 16 || std::memcmp(blob.data(), "WJDD", 4) != 0)
        throw IoError("'" + path + "' is not a WJDD container");
    Container c;
    c.version = get_u32(p + 4);
    if (c.version != kContainerVersion)
        throw IoError("unsupported container version " + std::to_string(c.version));
    const std::uint64_t header_len = get_u64(p + 8);
    if (16 + header_len > blob.size()) throw IoError("truncated container header");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(blob.substr(16, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad container header: ") + e.what());
    }
    c.meta = header.value("meta", nlohmann::json::object());

    const std::size_t payload_off = 16 + static_cast<std::size_t>(header_len);
    const std::size_t payload_bytes = blob.size() - payload_off;
    try {
        for (const nlohmann::json& e : header.at("arrays")) {
            NamedArray a;
            a.name = e.at("name").get<std::string>();
            a.shape = e.at("shape").get<std::vector<int>>();
            a.dtype = e.at("dtype").get<std::string>();
            if (a.dtype != "f32" && a.dtype != "f64")
                throw IoError("array '" + a.name + "' has unsupported dtype " + a.dtype);
            const std::size_t width = a.dtype == "f64" ? 8 : 4;
            const std::size_t off = e.at("offset").get<std::size_t>();
            const std::size_t count = e.at("count").get<std::size_t>();
            if (count != shape_count(a.shape) || off + count * width > payload_bytes)
                throw IoError("array '" + a.name + "' manifest is inconsistent");
            a.data.resize(count);
            const unsigned char* q = p + payload_off + off;
            for (std::size_t i = 0; i < count; ++i) {
                if (width == 8) {
                    const std::uint64_t bits = get_u64(q + i * 8);
                    std::memcpy(&a.data[i], &bits, 8);
                } else {
                    const std::uint32_t bits = get_u32(q + i * 4);
                    float f;
                    std::memcpy(&f, &bits, 4);
                    a.data[i] = static_cast<double>(f);
                }
            }
            c.arrays.push_back(std::move(a));
        }
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad container manifest: ") + e.what());
    }
    return c;
}

nlohmann::json net_config_to_json(const NetConfig& cfg) {
    return {{"channels", cfg.channels},
            {"grdb_blocks", cfg.grdb_blocks},
            {"grdb_layers", cfg.grdb_layers},
            {"growth", cfg.growth},
            {"kernel", cfg.kernel}};
}

NetConfig net_config_from_json(const nlohmann::json& j) {
    NetConfig cfg;
    try {
        cfg.channels = j.at("channels").get<int>();
        cfg.grdb_blocks = j.at("grdb_blocks").get<int>();
        cfg.grdb_layers = j.at("grdb_layers").get<int>();
        cfg.growth = j.at("growth").get<int>();
        cfg.kernel = j.at("kernel").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("bad net_config: ") + e.what());
    }
    return cfg;
}

void save_checkpoint(const std::string& path, const Network& net,
                     const nlohmann::json& training_meta) {
    std::vector<NamedArray> arrays;
    for (const ConvLayer& L : net.layers()) {
        arrays.push_back({L.name + ".w", {L.out_ch, L.in_ch, L.k, L.k}, L.w});
        arrays.push_back({L.name + ".b", {L.out_ch}, L.b});
    }
    const nlohmann::json meta = {{"net_config", net_config_to_json(net.config())},
                                 {"training", training_meta}};
    write_container(path, meta, arrays);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    Container c = read_container(path);
    if (!c.meta.contains("net_config"))
        throw IoError("'" + path + "' is not a model checkpoint (no net_config)");
    NetConfig cfg = net_config_from_json(c.meta.at("net_config"));
    try {
        cfg.validate();
    } catch (const ValidationError& e) {
        throw IoError(std::string("checkpoint net_config invalid: ") + e.what());
    }

    LoadedCheckpoint out{Network(cfg), c.meta.value("training", nlohmann::json::object())};
    std::vector<ConvLayer>& layers = out.net.layers();
    if (c.arrays.size() != layers.size() * 2)
        throw IoError("checkpoint array count does not match the architecture");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        ConvLayer& L = layers[i];
        const NamedArray& aw = c.arrays[2 * i];
        const NamedArray& ab = c.arrays[2 * i + 1];
        const std::vector<int> want_w = {L.out_ch, L.in_ch, L.k, L.k};
        const std::vector<int> want_b = {L.out_ch};
        if (aw.name != L.name + ".w" || aw.shape != want_w || ab.name != L.name + ".b" ||
            ab.shape != want_b)
            throw IoError("checkpoint array '" + aw.name +
                          "' does not match the architecture implied by net_config");
        L.w = aw.data;
        L.b = ab.data;
    }
    return out;
}

}  // namespace wjdd
