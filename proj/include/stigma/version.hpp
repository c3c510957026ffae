#pragma once

namespace stigma {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace stigma
