#pragma once

#include <vector>

#include "nonstat/core.hpp"
#include "nonstat/io.hpp"

namespace nonstat::io {

/// Linear interpolation across missing records (nearest value at the
/// boundaries). Returns the full-length value sequence.
inline std::vector<double> impute_linear(const std::vector<AnomalyRecord>& records) {
  const std::size_t n = records.size();
  std::vector<double> out(n, 0.0);
  std::vector<std::size_t> known;
  for (std::size_t i = 0; i < n; ++i)
    if (!records[i].missing) known.push_back(i);
  if (known.empty()) throw ValidationError("impute: no observed values");
  for (std::size_t i = 0; i < n; ++i) {
    if (!records[i].missing) {
      out[i] = records[i].value;
      continue;
    }
    const auto right = std::lower_bound(known.begin(), known.end(), i);
    if (right == known.begin()) {
      out[i] = records[known.front()].value;
    } else if (right == known.end()) {
      out[i] = records[known.back()].value;
    } else {
      const std::size_t hi = *right;
      const std::size_t lo = *(right - 1);
      const double t = static_cast<double>(i - lo) / static_cast<double>(hi - lo);
      out[i] = records[lo].value + t * (records[hi].value - records[lo].value);
    }
  }
  return out;
}

}  // namespace nonstat::io
