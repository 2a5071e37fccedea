#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace storytag {

/// Placeholder emitted for every numeric token.
inline constexpr std::string_view kNumberToken = "cc";

/// Lowercases ASCII letters, splits into word and punctuation tokens and
/// replaces numeric tokens ("1945", "1,945", "3.5") with "cc".
std::vector<std::string> normalize_text(std::string_view text);

/// True when `token` is made only of digits and digit punctuation (.,:/-)
/// and contains at least one digit.
bool is_number_token(std::string_view token);

/// True when every byte of `token` is ASCII punctuation.
bool is_punctuation_token(std::string_view token);

/// Splits raw text into sentences.
///
/// A sentence ends at a line break, or at '.', '!' or '?' (optionally followed
/// by closing quotes or brackets) when the next non-space character is an
/// uppercase letter, a digit or an opening quote and the word before the
/// period is not a known abbreviation or a single-letter initial. Returned
/// sentences are trimmed and never empty.
std::vector<std::string> split_sentences(std::string_view text);

}  // namespace storytag
