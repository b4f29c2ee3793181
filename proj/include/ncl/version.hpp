#pragma once

#include <string_view>

namespace ncl {

inline constexpr std::string_view kVersion = "0.1.0";

}  // namespace ncl
