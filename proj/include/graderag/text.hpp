#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace graderag {

namespace detail {

inline bool is_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

inline bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

inline char lower_char(char c) {
  return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

}  // namespace detail

/// Token count of a text: number of whitespace-separated words.
inline std::size_t count_tokens(std::string_view text) {
  std::size_t count = 0;
  bool in_word = false;
  for (char c : text) {
    if (detail::is_space(c)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++count;
    }
  }
  return count;
}

/// Collapses whitespace runs to single spaces and trims both ends.
inline std::string normalize_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (detail::is_space(c)) {
      pending_space = !out.empty();
    } else {
      if (pending_space) out.push_back(' ');
      pending_space = false;
      out.push_back(c);
    }
  }
  return out;
}

inline std::string to_lower(std::string_view text) {
  std::string out(text);
  for (char& c : out) c = detail::lower_char(c);
  return out;
}

/// Lowercased word tokens: maximal alphanumeric runs, punctuation dropped.
inline std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (detail::is_word_char(c)) {
      cur.push_back(detail::lower_char(c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

/// Splits prose into sentences at '.', '?' or '!' followed by whitespace.
/// Sentences keep their terminal punctuation; surrounding whitespace is
/// trimmed. Whitespace-only input yields no sentences.
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> sentences;
  std::size_t start = 0;
  const std::size_t n = text.size();
  auto flush = [&](std::size_t end) {
    while (start < end && detail::is_space(text[start])) ++start;
    std::size_t stop = end;
    while (stop > start && detail::is_space(text[stop - 1])) --stop;
    if (stop > start) sentences.emplace_back(text.substr(start, stop - start));
    start = end;
  };
  for (std::size_t i = 0; i < n; ++i) {
    char c = text[i];
    if ((c == '.' || c == '?' || c == '!') &&
        (i + 1 == n || detail::is_space(text[i + 1]))) {
      flush(i + 1);
    }
  }
  flush(n);
  return sentences;
}

/// FNV-1a 64-bit hash over the raw bytes.
inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (char c : data) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 1099511628211ull;
  }
  return h;
}

/// 16-char lowercase hex digest of fnv1a64, used as a prompt fingerprint.
inline std::string fingerprint_hex(std::string_view data) {
  static const char* hex = "0123456789abcdef";
  std::uint64_t h = fnv1a64(data);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[h & 0xf];
    h >>= 4;
  }
  return out;
}

/// Case-insensitive word-boundary phrase match: the phrase's word tokens
/// appear as a contiguous run of the text's word tokens.
inline bool contains_phrase(std::string_view text, std::string_view phrase) {
  const std::vector<std::string> needle = word_tokens(phrase);
  if (needle.empty()) return false;
  const std::vector<std::string> hay = word_tokens(text);
  if (hay.size() < needle.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < needle.size(); ++j) {
      if (hay[i + j] != needle[j]) {
        match = false;
        break;
      }
    }
    if (match) return true;
  }
  return false;
}

}  // namespace graderag
