#include "citecrit/text.hpp"

#include "citecrit/error.hpp"

namespace citecrit::text {

std::u32string decode_utf8(std::string_view bytes) {
    std::u32string out;
    out.reserve(bytes.size());
    std::size_t i = 0;
    const std::size_t n = bytes.size();
    while (i < n) {
        const auto b0 = static_cast<unsigned char>(bytes[i]);
        char32_t cp = 0;
        std::size_t len = 0;
        if (b0 < 0x80) {
            cp = b0;
            len = 1;
        } else if ((b0 & 0xE0) == 0xC0) {
            cp = b0 & 0x1F;
            len = 2;
        } else if ((b0 & 0xF0) == 0xE0) {
            cp = b0 & 0x0F;
            len = 3;
        } else if ((b0 & 0xF8) == 0xF0) {
            cp = b0 & 0x07;
            len = 4;
        } else {
            throw ParseError(0, "invalid UTF-8 lead byte at offset " + std::to_string(i));
        }
        if (i + len > n) {
            throw ParseError(0, "truncated UTF-8 sequence at offset " + std::to_string(i));
        }
        for (std::size_t k = 1; k < len; ++k) {
            const auto b = static_cast<unsigned char>(bytes[i + k]);
            if ((b & 0xC0) != 0x80) {
                throw ParseError(0, "invalid UTF-8 continuation at offset " + std::to_string(i + k));
            }
            cp = (cp << 6) | (b & 0x3F);
        }
        const bool overlong = (len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) ||
                              (len == 4 && cp < 0x10000);
        if (overlong || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            throw ParseError(0, "invalid UTF-8 code point at offset " + std::to_string(i));
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string encode_utf8(std::u32string_view code_points) {
    std::string out;
    out.reserve(code_points.size());
    for (char32_t cp : code_points) append_utf8(out, cp);
    return out;
}

std::size_t count_code_points(std::string_view bytes) {
    std::size_t n = 0;
    for (char c : bytes) {
        if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
    }
    return n;
}

char32_t fold_case(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= U'A' && cp <= U'Z') ? cp + 32 : cp;
    }
    if ((cp >= 0xC0 && cp <= 0xDE) && cp != 0xD7) return cp + 32;
    if (cp >= 0x100 && cp <= 0x17F) {
        // Latin Extended-A alternates upper/lower, with a shifted run.
        if ((cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E)) {
            return (cp % 2 == 1) ? cp + 1 : cp;
        }
        if (cp == 0x130 || cp == 0x131 || cp == 0x138 || cp == 0x149 || cp == 0x17F) return cp;
        return (cp % 2 == 0) ? cp + 1 : cp;
    }
    if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 32;
    if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
    if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
    return cp;
}

std::u32string fold_case(std::u32string_view s) {
    std::u32string out(s);
    for (auto& cp : out) cp = fold_case(cp);
    return out;
}

std::string fold_case(std::string_view utf8) {
    return encode_utf8(fold_case(std::u32string_view(decode_utf8(utf8))));
}

bool is_space(char32_t cp) {
    switch (cp) {
        case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000: case 0xFEFF:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200B;
    }
}

bool is_digit(char32_t cp) { return cp >= U'0' && cp <= U'9'; }

bool is_standalone_symbol(char32_t cp) {
    return (cp >= 0x3040 && cp <= 0x30FF) ||    // kana
           (cp >= 0x3400 && cp <= 0x4DBF) ||    // CJK extension A
           (cp >= 0x4E00 && cp <= 0x9FFF) ||    // CJK unified
           (cp >= 0xAC00 && cp <= 0xD7AF) ||    // Hangul syllables
           (cp >= 0xF900 && cp <= 0xFAFF) ||    // CJK compatibility
           (cp >= 0x20000 && cp <= 0x2FFFF) ||  // CJK extensions B+
           (cp >= 0x2600 && cp <= 0x27BF) ||    // misc symbols, dingbats
           (cp >= 0x1F000 && cp <= 0x1FAFF);    // emoji
}

bool is_letter(char32_t cp) {
    if (cp < 0x80) return (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z');
    if (is_space(cp) || is_standalone_symbol(cp)) return false;
    if (cp >= 0xC0 && cp <= 0x24F) return cp != 0xD7 && cp != 0xF7;
    if (cp >= 0x370 && cp <= 0x3FF) return cp != 0x37E && cp != 0x387;
    if (cp >= 0x400 && cp <= 0x52F) return true;
    if (cp >= 0x530 && cp <= 0x1FFF) return true;  // other alphabetic scripts
    if (cp >= 0x1E00 && cp <= 0x1EFF) return true;
    return false;
}

bool is_uppercase(char32_t cp) { return fold_case(cp) != cp; }

namespace {

bool is_apostrophe(char32_t cp) { return cp == U'\'' || cp == 0x2019; }

bool is_word_char(char32_t cp) { return is_letter(cp) || is_digit(cp); }

}  // namespace

std::vector<Token> tokenize(std::u32string_view s) {
    std::vector<Token> tokens;
    const std::size_t n = s.size();
    std::size_t i = 0;
    while (i < n) {
        const char32_t cp = s[i];
        if (is_space(cp)) {
            ++i;
            continue;
        }
        if (is_word_char(cp)) {
            std::size_t j = i;
            bool has_letter = false;
            while (j < n) {
                if (is_word_char(s[j])) {
                    has_letter = has_letter || is_letter(s[j]);
                    ++j;
                } else if (j + 1 < n && is_apostrophe(s[j]) && j > i && is_letter(s[j - 1]) &&
                           is_letter(s[j + 1])) {
                    ++j;
                } else if (j + 1 < n && (s[j] == U'.' || s[j] == U',') && !has_letter &&
                           is_digit(s[j - 1]) && is_digit(s[j + 1])) {
                    ++j;
                } else {
                    break;
                }
            }
            tokens.push_back({i, j, has_letter ? TokenKind::word : TokenKind::number});
            i = j;
            continue;
        }
        tokens.push_back({i, i + 1, TokenKind::punct});
        ++i;
    }
    return tokens;
}

std::vector<std::string> folded_tokens(std::string_view utf8) {
    const std::u32string s = fold_case(std::u32string_view(decode_utf8(utf8)));
    std::vector<std::string> out;
    for (const Token& t : tokenize(s)) {
        out.push_back(encode_utf8(std::u32string_view(s).substr(t.begin, t.end - t.begin)));
    }
    return out;
}

std::vector<std::string> folded_words(std::string_view utf8) {
    const std::u32string s = fold_case(std::u32string_view(decode_utf8(utf8)));
    std::vector<std::string> out;
    for (const Token& t : tokenize(s)) {
        if (!is_wordlike(t)) continue;
        out.push_back(encode_utf8(std::u32string_view(s).substr(t.begin, t.end - t.begin)));
    }
    return out;
}

std::string_view trim(std::string_view s) {
    const std::u32string cps = decode_utf8(s);
    // Byte offset at which each code point starts, plus the end offset.
    std::vector<std::size_t> offsets;
    offsets.reserve(cps.size() + 1);
    for (std::size_t b = 0; b < s.size(); ++b) {
        if ((static_cast<unsigned char>(s[b]) & 0xC0) != 0x80) offsets.push_back(b);
    }
    offsets.push_back(s.size());
    std::size_t lo = 0;
    std::size_t hi = cps.size();
    while (lo < hi && is_space(cps[lo])) ++lo;
    while (hi > lo && is_space(cps[hi - 1])) --hi;
    return s.substr(offsets[lo], offsets[hi] - offsets[lo]);
}

std::string normalize_space(std::string_view utf8) {
    const std::u32string cps = decode_utf8(utf8);
    std::string out;
    out.reserve(utf8.size());
    bool pending_space = false;
    for (char32_t cp : cps) {
        if (is_space(cp)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        append_utf8(out, cp);
    }
    return out;
}

}  // namespace citecrit::text
