#pragma once

namespace qsc {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qsc
