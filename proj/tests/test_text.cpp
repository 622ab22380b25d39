#include <doctest.h>

#include <sstream>

#include "citecrit/csv.hpp"
#include "citecrit/error.hpp"
#include "citecrit/hashing.hpp"
#include "citecrit/resources.hpp"
#include "citecrit/text.hpp"

using namespace citecrit;

TEST_CASE("utf8 round trip keeps CJK and emoji") {
    const std::string s = "Ties 领带 \xF0\x9F\x91\x94 caf\xC3\xA9";
    const auto cps = text::decode_utf8(s);
    CHECK(text::encode_utf8(cps) == s);
    CHECK(cps.size() == text::count_code_points(s));
    CHECK(cps.size() == 14);
}

TEST_CASE("malformed utf8 is a parse error") {
    CHECK_THROWS_AS(text::decode_utf8("\xC3"), ParseError);
    CHECK_THROWS_AS(text::decode_utf8("\xC0\x80"), ParseError);
    CHECK_THROWS_AS(text::decode_utf8("\xED\xA0\x80"), ParseError);
}

TEST_CASE("tokenizer splits words, numbers and punctuation") {
    const std::u32string s = text::decode_utf8("Isn't it 3.14, Bob?  Yes!");
    const auto toks = text::tokenize(s);
    std::vector<std::string> got;
    for (const auto& t : toks) got.push_back(text::encode_utf8(s.substr(t.begin, t.end - t.begin)));
    const std::vector<std::string> want = {"Isn't", "it", "3.14", ",", "Bob", "?", "Yes", "!"};
    CHECK(got == want);
    CHECK(toks[2].kind == text::TokenKind::number);
    CHECK(toks[3].kind == text::TokenKind::punct);
}

TEST_CASE("ideographs are single tokens") {
    const auto toks = text::folded_tokens("领带ok");
    CHECK(toks == std::vector<std::string>{"领", "带", "ok"});
}

TEST_CASE("case folding and whitespace helpers") {
    CHECK(text::fold_case(std::string_view("ÉCOLE Straße")) == "école straße");
    CHECK(text::trim("  \t hi there \n") == "hi there");
    CHECK(text::trim("\xE3\x80\x80x\xE3\x80\x80") == "x");
    CHECK(text::normalize_space("  a \n\n b\tc ") == "a b c");
}

TEST_CASE("csv quoting round trip") {
    std::ostringstream out;
    csv::write_row(out, {"plain", "with,comma", "with \"quote\"", "multi\nline"});
    std::istringstream in(out.str() + "x,y\n");
    csv::Reader reader(in);
    const auto row = reader.next();
    REQUIRE(row);
    CHECK(*row == std::vector<std::string>{"plain", "with,comma", "with \"quote\"", "multi\nline"});
    const auto row2 = reader.next();
    REQUIRE(row2);
    CHECK(reader.line() == 3);
    CHECK(!reader.next());
}

TEST_CASE("csv numeric parsing reports the line") {
    CHECK(csv::parse_double("1.5", 1, "x") == 1.5);
    CHECK_THROWS_AS(csv::parse_double("1.5x", 7, "x"), ParseError);
    try {
        csv::parse_int("abc", 7, "rank");
    } catch (const ParseError& e) {
        CHECK(e.line() == 7);
    }
    CHECK(csv::format_double(0.1) == "0.1");
}

TEST_CASE("sha256 known answer") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
}

TEST_CASE("builtin resources are present") {
    for (const char* name : {"easy_words.txt", "sentiment.csv", "articles.txt", "certitude.txt",
                             "conversation.txt", "negators.txt", "intensifiers.txt"}) {
        CHECK(resources::builtin_files().count(name) == 1);
    }
    CHECK_THROWS_AS(resources::load("missing.txt"), IoError);
}
