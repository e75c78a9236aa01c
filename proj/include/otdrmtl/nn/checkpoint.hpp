#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "otdrmtl/errors.hpp"
#include "otdrmtl/io_util.hpp"
#include "otdrmtl/nn/tensor.hpp"

namespace otdrmtl::nn {

inline constexpr int kCheckpointVersion = 1;

// Checkpoint = <base>.json manifest + <base>.bin blob. The blob holds all
// tensors concatenated in manifest order, little-endian; dtype is float32
// for model exports and float64 where exact resume matters.

namespace detail {

inline void append_le(std::string& out, std::uint64_t bits, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline std::uint64_t read_le(const std::string& blob, std::size_t offset, int bytes) {
    std::uint64_t bits = 0;
    for (int i = 0; i < bytes; ++i)
        bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[offset + static_cast<std::size_t>(i)]))
                << (8 * i);
    return bits;
}

}  // namespace detail

inline void save_tensors(const std::filesystem::path& base, const std::vector<std::pair<std::string, const Tensor*>>& tensors,
                         bool float64, nlohmann::json extra) {
    std::string blob;
    nlohmann::json manifest;
    manifest["format_version"] = kCheckpointVersion;
    manifest["dtype"] = float64 ? "float64" : "float32";
    auto& list = manifest["tensors"] = nlohmann::json::array();
    for (const auto& [name, tensor] : tensors) {
        nlohmann::json entry;
        entry["name"] = name;
        entry["shape"] = tensor->shape;
        entry["offset"] = blob.size();
        list.push_back(entry);
        for (double v : tensor->data) {
            if (float64) {
                std::uint64_t bits;
                std::memcpy(&bits, &v, 8);
                detail::append_le(blob, bits, 8);
            } else {
                const float f = static_cast<float>(v);
                std::uint32_t bits;
                std::memcpy(&bits, &f, 4);
                detail::append_le(blob, bits, 4);
            }
        }
    }
    manifest["blob_bytes"] = blob.size();
    manifest["blob_hash"] = hash_hex(fnv1a64(blob.data(), blob.size()));
    manifest["extra"] = std::move(extra);
    write_file_atomic(base.string() + ".bin", blob);
    write_file_atomic(base.string() + ".json", manifest.dump(2) + "\n");
}

struct LoadedCheckpoint {
    nlohmann::json manifest;
    std::map<std::string, Tensor> tensors;

    const nlohmann::json& extra() const { return manifest.at("extra"); }

    const Tensor& tensor(const std::string& name) const {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw data_error("checkpoint: missing tensor " + name);
        return it->second;
    }
};

inline LoadedCheckpoint load_tensors(const std::filesystem::path& base) {
    LoadedCheckpoint out;
    try {
        out.manifest = nlohmann::json::parse(read_file(base.string() + ".json"));
    } catch (const nlohmann::json::exception& e) {
        throw data_error("checkpoint: bad manifest: " + std::string(e.what()));
    }
    if (out.manifest.value("format_version", -1) != kCheckpointVersion)
        throw data_error("checkpoint: unsupported format version");
    const std::string blob = read_file(base.string() + ".bin");
    if (out.manifest.at("blob_bytes").get<std::size_t>() != blob.size() ||
        out.manifest.at("blob_hash").get<std::string>() != hash_hex(fnv1a64(blob.data(), blob.size())))
        throw data_error("checkpoint: blob hash mismatch (corrupted or truncated)");
    const bool float64 = out.manifest.at("dtype").get<std::string>() == "float64";
    const std::size_t width = float64 ? 8 : 4;
    for (const auto& entry : out.manifest.at("tensors")) {
        const auto name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        const auto offset = entry.at("offset").get<std::size_t>();
        Tensor t(shape);
        if (offset + t.numel() * width > blob.size()) throw data_error("checkpoint: tensor " + name + " out of bounds");
        for (std::size_t i = 0; i < t.numel(); ++i) {
            if (float64) {
                const std::uint64_t bits = detail::read_le(blob, offset + i * 8, 8);
                double v;
                std::memcpy(&v, &bits, 8);
                t[i] = v;
            } else {
                const auto bits = static_cast<std::uint32_t>(detail::read_le(blob, offset + i * 4, 4));
                float f;
                std::memcpy(&f, &bits, 4);
                t[i] = static_cast<double>(f);
            }
        }
        out.tensors.emplace(name, std::move(t));
    }
    return out;
}

}  // namespace otdrmtl::nn
