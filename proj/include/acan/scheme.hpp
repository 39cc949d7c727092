#pragma once

#include <string>
#include <string_view>

namespace acan {

// Active generator objective for the camera-alignment task. kNone trains the
// extractor with the triplet loss alone and leaves the discriminator untouched.
enum class Scheme { kNone, kGrl, kOce, kAce };

std::string to_string(Scheme s);

// Accepts "none", "grl", "oce", "ace"; throws ConfigError otherwise.
Scheme scheme_from_string(std::string_view s);

}  // namespace acan
