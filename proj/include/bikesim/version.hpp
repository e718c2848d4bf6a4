#pragma once

namespace bikesim {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace bikesim
