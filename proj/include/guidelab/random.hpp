// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include "guidelab/tensor.hpp"

namespace guidelab {

// All randomness in a run flows from one root seed. A stream is identified by
// a path of integers (stream tag, task index, counter, ...); its seed is the
// root folded with each path element through the SplitMix64 finalizer. Streams
// with different paths are statistically independent, and adding a new stream
// never perturbs an existing one.
enum class Stream : std::uint64_t {
    Data = 1,
    Split = 2,
    ModelInit = 3,
    ClassifierBatch = 4,
    Rehearsal = 5,
    DiffusionDataset = 6,
    DiffusionTrain = 7,
    Probe = 8,
    Demo = 9,
    Recall = 10,
};

std::uint64_t splitmix64(std::uint64_t x) noexcept;

std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> path) noexcept;

inline std::uint64_t derive_seed(std::uint64_t root, Stream stream, std::initializer_list<std::uint64_t> path = {}) noexcept {
    std::uint64_t s = derive_seed(root, {static_cast<std::uint64_t>(stream)});
    return derive_seed(s, path);
}

using Rng = std::mt19937_64;

/// Tensor of i.i.d. N(0,1) draws.
Tensor standard_normal(const Shape& shape, Rng& rng);

}  // namespace guidelab
