#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace newsim::unicode {

inline constexpr char32_t replacement_char = 0xFFFD;

/// Decodes UTF-8; each invalid byte becomes U+FFFD.
std::u32string decode_utf8(std::string_view bytes);

void append_utf8(std::string &out, char32_t cp);

std::string encode_utf8(std::u32string_view cps);

bool is_whitespace(char32_t cp) noexcept;

// Punctuation: ASCII symbols and punctuation, the Latin-1 punctuation marks,
// General Punctuation, CJK symbols and punctuation, Arabic punctuation and
// the fullwidth ASCII variants.
bool is_punctuation(char32_t cp) noexcept;

bool is_cjk_ideograph(char32_t cp) noexcept;

// Simple one-to-one lowercase mapping for Latin (Basic, Latin-1, Extended-A),
// Greek and Cyrillic. Other code points map to themselves.
char32_t to_lower(char32_t cp) noexcept;

/// Splits on Unicode whitespace, dropping empty pieces.
std::vector<std::string_view> split_whitespace(std::string_view text);

} // namespace newsim::unicode
