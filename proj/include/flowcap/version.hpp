#pragma once

namespace flowcap {

inline constexpr int version_major = 0;
inline constexpr int version_minor = 1;
inline constexpr int version_patch = 0;

inline constexpr const char* version_string = "0.1.0";

// Schema tags written into serialized artifacts.
inline constexpr const char* dist_schema = "flowcap-dist-1";
inline constexpr const char* flow_schema = "flowcap-flow-1";

} // namespace flowcap
