#pragma once

#include <string_view>

namespace flipdeck {

// Jaccard index of the lowercased word-token sets of two texts. Two texts
// with no tokens at all are considered identical (1.0).
double token_jaccard(std::string_view a, std::string_view b);

} // namespace flipdeck
