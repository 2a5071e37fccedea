#include "storytag/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace storytag {
namespace {

bool is_ascii(char c) { return static_cast<unsigned char>(c) < 0x80; }

// Non-ASCII bytes are treated as word characters so UTF-8 words stay intact.
bool is_word_char(char c) {
  return !is_ascii(c) || std::isalnum(static_cast<unsigned char>(c)) != 0;
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_joiner_between(std::string_view text, std::size_t i) {
  if (i == 0 || i + 1 >= text.size()) return false;
  const char prev = text[i - 1];
  const char next = text[i + 1];
  switch (text[i]) {
    case '-':
    case '\'':
      return is_word_char(prev) && is_word_char(next);
    case '.':
    case ',':
    case ':':
    case '/':
      return is_digit(prev) && is_digit(next);
    default:
      return false;
  }
}

constexpr std::array<std::string_view, 24> kAbbreviations = {
    "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "vs", "etc", "no", "mt",
    "lt", "col", "gen", "capt", "sgt", "rev", "gov", "sen", "rep", "fr", "inc", "co"};

bool is_abbreviation(std::string_view word) {
  std::string lower;
  lower.reserve(word.size());
  for (char c : word) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (lower.size() == 1 && std::isalpha(static_cast<unsigned char>(lower[0])) != 0) return true;
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), lower) != kAbbreviations.end();
}

bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

bool opens_sentence(char c) {
  return std::isupper(static_cast<unsigned char>(c)) != 0 || is_digit(c) || c == '"' ||
         c == '\'' || c == '(' || c == '[';
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace

bool is_number_token(std::string_view token) {
  bool digit = false;
  for (char c : token) {
    if (is_digit(c)) {
      digit = true;
    } else if (c != '.' && c != ',' && c != ':' && c != '/' && c != '-') {
      return false;
    }
  }
  return digit;
}

bool is_punctuation_token(std::string_view token) {
  if (token.empty()) return false;
  return std::all_of(token.begin(), token.end(), [](char c) {
    return is_ascii(c) && std::ispunct(static_cast<unsigned char>(c)) != 0;
  });
}

std::vector<std::string> normalize_text(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (current.empty()) return;
    if (is_number_token(current)) {
      tokens.emplace_back(kNumberToken);
    } else {
      tokens.push_back(std::move(current));
    }
    current.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (is_word_char(c)) {
      current.push_back(is_ascii(c) ? static_cast<char>(std::tolower(static_cast<unsigned char>(c))) : c);
    } else if (!current.empty() && is_joiner_between(text, i)) {
      current.push_back(c);
    } else {
      flush();
      if (!is_space(c) && is_ascii(c) && std::ispunct(static_cast<unsigned char>(c)) != 0) {
        tokens.emplace_back(1, c);
      }
    }
  }
  flush();
  return tokens;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> sentences;
  std::size_t start = 0;
  auto emit = [&](std::size_t end) {
    const auto piece = trim(text.substr(start, end - start));
    if (!piece.empty()) sentences.emplace_back(piece);
    start = end;
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n' || c == '\r') {
      emit(i);
      start = i + 1;
      continue;
    }
    if (c != '.' && c != '!' && c != '?') continue;

    std::size_t end = i + 1;
    while (end < text.size() && (text[end] == '.' || text[end] == '!' || text[end] == '?')) ++end;
    while (end < text.size() && is_closer(text[end])) ++end;
    std::size_t next = end;
    while (next < text.size() && (text[next] == ' ' || text[next] == '\t')) ++next;
    if (next == end || next >= text.size()) {
      i = end - 1;
      continue;
    }
    if (text[next] == '\n' || text[next] == '\r') {
      i = end - 1;
      continue;
    }
    if (!opens_sentence(text[next])) {
      i = end - 1;
      continue;
    }
    if (c == '.' && end == i + 1) {
      std::size_t w = i;
      while (w > start && is_word_char(text[w - 1])) --w;
      if (w < i && is_abbreviation(text.substr(w, i - w))) continue;
    }
    emit(end);
    i = end - 1;
  }
  emit(text.size());
  return sentences;
}

}  // namespace storytag
