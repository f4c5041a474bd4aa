// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "guidelab/nn.hpp"

namespace guidelab {

/// Format tag written into every checkpoint document.
inline constexpr std::string_view kCheckpointFormat = "guidelab-checkpoint/1";

// A checkpoint is a JSON object:
//   { "format": "guidelab-checkpoint/1",
//     "kind": "<model kind>",
//     "hyperparameters": { ... },
//     "parameters": [ { "name": ..., "shape": [...], "values": [...] }, ... ],
//     ... model-specific header fields (e.g. "schedule") }
// Doubles are written with round-trip precision, so save/load is exact.

nlohmann::json parameters_to_json(const ParameterList& params);

/// Copies values from `doc` into `params`, matching by name. Throws FileError on
/// a missing name or shape mismatch.
void load_parameters(const nlohmann::json& doc, const ParameterList& params);

/// Validates the format tag and the kind field.
void check_checkpoint_header(const nlohmann::json& doc, std::string_view expected_kind);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json_file(const std::filesystem::path& path);

/// FNV-1a over the serialized document; used to verify frozen snapshots.
std::uint64_t checkpoint_hash(const nlohmann::json& doc);

}  // namespace guidelab
