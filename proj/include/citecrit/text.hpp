#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace citecrit::text {

// UTF-8 <-> code points. Decoding rejects malformed sequences and surrogates.
std::u32string decode_utf8(std::string_view bytes);
std::string encode_utf8(std::u32string_view code_points);
void append_utf8(std::string& out, char32_t cp);
std::size_t count_code_points(std::string_view bytes);

// Simple one-to-one lowercase mapping: ASCII, Latin-1, Latin Extended-A,
// Greek and Cyrillic capitals. Other code points map to themselves.
char32_t fold_case(char32_t cp);
std::u32string fold_case(std::u32string_view s);
std::string fold_case(std::string_view utf8);

bool is_space(char32_t cp);
bool is_letter(char32_t cp);
bool is_digit(char32_t cp);
bool is_uppercase(char32_t cp);
// Ideographs, kana and emoji form one-character tokens of their own.
bool is_standalone_symbol(char32_t cp);

enum class TokenKind { word, number, punct };

/// One token of a text. Offsets are code-point indices into the decoded text.
struct Token {
    std::size_t begin = 0;
    std::size_t end = 0;
    TokenKind kind = TokenKind::word;
};

/// Word-boundary tokenizer. Letter/digit runs form words (an apostrophe
/// between letters stays inside the word, so "isn't" is one token); digit
/// runs with inner '.' or ',' form numbers; every other non-space code point
/// is a single punctuation token. Tokens never overlap and cover all
/// non-whitespace.
std::vector<Token> tokenize(std::u32string_view text);

inline bool is_wordlike(const Token& t) {
    return t.kind == TokenKind::word || t.kind == TokenKind::number;
}

/// Case-folded UTF-8 text of every token.
std::vector<std::string> folded_tokens(std::string_view utf8);

/// Case-folded UTF-8 text of word and number tokens only.
std::vector<std::string> folded_words(std::string_view utf8);

/// Trim ASCII/Unicode whitespace at both ends.
std::string_view trim(std::string_view s);

/// Collapse every whitespace run to one ASCII space and trim.
std::string normalize_space(std::string_view utf8);

}  // namespace citecrit::text
