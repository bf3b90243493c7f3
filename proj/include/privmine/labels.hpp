#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace privmine {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input: malformed files, out-of-range arguments, inconsistent artifacts.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Binary class used by gold files, predictions, annotator labels and
// classifier decisions. privacy is the positive class.
enum class Label : unsigned char { not_privacy = 0, privacy = 1 };

std::string_view to_string(Label label);

// Accepts "privacy"/"not-privacy" (also "not_privacy"), "yes"/"no" and "1"/"0".
std::optional<Label> parse_label(std::string_view text);

inline Label flip(Label label) {
    return label == Label::privacy ? Label::not_privacy : Label::privacy;
}

} // namespace privmine
