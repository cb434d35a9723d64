#pragma once

namespace nonstat {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace nonstat
