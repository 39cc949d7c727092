#include "acan/scheme.hpp"

#include "acan/errors.hpp"

namespace acan {

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::kNone: return "none";
    case Scheme::kGrl: return "grl";
    case Scheme::kOce: return "oce";
    case Scheme::kAce: return "ace";
  }
  throw ConfigError("to_string: unknown scheme tag");
}

Scheme scheme_from_string(std::string_view s) {
  if (s == "none") return Scheme::kNone;
  if (s == "grl") return Scheme::kGrl;
  if (s == "oce") return Scheme::kOce;
  if (s == "ace") return Scheme::kAce;
  throw ConfigError("unknown scheme '" + std::string(s) + "' (expected none|grl|oce|ace)");
}

}  // namespace acan
