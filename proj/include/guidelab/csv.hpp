// Copyright (C) 2026 The guidelab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace guidelab {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_number(double value);

/// Splits one CSV line on commas. No quoting support; fields are numeric or
/// plain identifiers.
std::vector<std::string_view> split_csv_line(std::string_view line);

/// Parses a whole field as a double. Throws FileError on junk.
double parse_number(std::string_view field);

}  // namespace guidelab
