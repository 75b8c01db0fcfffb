#pragma once

namespace senti {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace senti
