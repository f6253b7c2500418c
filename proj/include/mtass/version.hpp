// Copyright 2026 The mtass Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

namespace mtass {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mtass
