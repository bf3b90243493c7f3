#include "privmine/labels.hpp"

namespace privmine {

std::string_view to_string(Label label) {
    return label == Label::privacy ? "privacy" : "not-privacy";
}

std::optional<Label> parse_label(std::string_view text) {
    if (text == "privacy" || text == "yes" || text == "1") return Label::privacy;
    if (text == "not-privacy" || text == "not_privacy" || text == "no" || text == "0")
        return Label::not_privacy;
    return std::nullopt;
}

} // namespace privmine
