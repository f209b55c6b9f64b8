#include "flipdeck/similarity.hpp"

#include "flipdeck/text.hpp"

namespace flipdeck {

double token_jaccard(std::string_view a, std::string_view b) {
    auto ta = text::word_token_set(a);
    auto tb = text::word_token_set(b);
    if (ta.empty() && tb.empty()) return 1.0;
    std::size_t common = 0;
    for (const auto& t : ta) common += tb.count(t);
    std::size_t uni = ta.size() + tb.size() - common;
    return static_cast<double>(common) / static_cast<double>(uni);
}

} // namespace flipdeck
