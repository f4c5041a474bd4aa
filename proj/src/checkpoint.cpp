// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#include "guidelab/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "guidelab/errors.hpp"

namespace guidelab {

nlohmann::json parameters_to_json(const ParameterList& params) {
    check_unique_names(params);
    auto arr = nlohmann::json::array();
    for (const auto& p : params) {
        auto values = p.tensor.values();
        arr.push_back({{"name", p.name},
                       {"shape", p.tensor.shape()},
                       {"values", std::vector<double>(values.begin(), values.end())}});
    }
    return arr;
}

void load_parameters(const nlohmann::json& doc, const ParameterList& params) {
    const auto& arr = doc.at("parameters");
    for (const auto& p : params) {
        auto it = std::find_if(arr.begin(), arr.end(), [&](const nlohmann::json& e) { return e.at("name") == p.name; });
        if (it == arr.end()) throw FileError("checkpoint: parameter '" + p.name + "' missing");
        const auto shape = it->at("shape").get<Shape>();
        if (shape != p.tensor.shape()) {
            throw FileError("checkpoint: parameter '" + p.name + "' has shape " + shape_to_string(shape) +
                            ", model expects " + shape_to_string(p.tensor.shape()));
        }
        const auto values = it->at("values").get<std::vector<double>>();
        Tensor t = p.tensor;
        auto dst = t.mutable_values();
        if (values.size() != dst.size()) throw FileError("checkpoint: parameter '" + p.name + "' value count mismatch");
        std::copy(values.begin(), values.end(), dst.begin());
    }
}

void check_checkpoint_header(const nlohmann::json& doc, std::string_view expected_kind) {
    if (!doc.is_object() || !doc.contains("format") || doc.at("format") != kCheckpointFormat) {
        throw FileError("checkpoint: missing or unsupported format tag (expected " + std::string(kCheckpointFormat) + ")");
    }
    if (doc.value("kind", std::string{}) != expected_kind) {
        throw FileError("checkpoint: expected kind '" + std::string(expected_kind) + "', found '" +
                        doc.value("kind", std::string{}) + "'");
    }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw FileError("cannot write " + path.string());
    out << doc.dump(2) << '\n';
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FileError("cannot read " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FileError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

std::uint64_t checkpoint_hash(const nlohmann::json& doc) {
    const std::string bytes = doc.dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace guidelab
