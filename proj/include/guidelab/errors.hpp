// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace guidelab {

/// Shape mismatch between operands. The message names the op and both shapes.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A documented precondition of an operation was violated by the caller.
class ContractError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

class IndexError : public std::out_of_range {
  public:
    using std::out_of_range::out_of_range;
};

/// Invalid configuration value. `key()` names the offending entry when known.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& message, std::string key = {})
        : std::runtime_error(message), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

  private:
    std::string key_;
};

/// Numerical failure during optimisation (NaN/Inf loss).
class TrainingError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// The continual-learning protocol was driven out of order.
class ProtocolError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

class FileError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

}  // namespace guidelab
