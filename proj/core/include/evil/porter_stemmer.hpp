#pragma once

#include <string>
#include <string_view>

namespace evil {

/// Porter (1980) suffix-stripping stemmer, following the reference C
/// implementation (including its "bli" and "logi" step-2 rules). Expects a
/// lowercase word; words of length <= 2 are returned unchanged.
std::string porter_stem(std::string_view word);

}  // namespace evil
