#pragma once

namespace ccac {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kMetricsSchemaVersion = 1;
inline constexpr int kParamFileVersion = 1;

}  // namespace ccac
