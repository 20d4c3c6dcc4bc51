// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ddt-toolkit Authors

#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <span>

#include <json.hpp>

namespace ddt::detail {

using ordered_json = nlohmann::ordered_json;

// Nearest double to the 9-significant-digit decimal rendering of x.
inline double round_sig9(double x) {
  if (!std::isfinite(x) || x == 0.0) return x;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return std::strtod(buf, nullptr);
}

inline ordered_json number9(double x) {
  if (!std::isfinite(x)) return nullptr;
  return round_sig9(x);
}

template <typename T, typename F>
ordered_json array9(std::span<const T> items, F&& field) {
  ordered_json arr = ordered_json::array();
  for (const auto& item : items) arr.push_back(number9(field(item)));
  return arr;
}

}  // namespace ddt::detail
