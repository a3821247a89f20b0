#pragma once

namespace lso {

inline constexpr const char* tool_name = "lsoctl";
inline constexpr const char* tool_version = "0.1.0";

} // namespace lso
