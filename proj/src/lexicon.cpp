#include "citecrit/lexicon.hpp"

#include <algorithm>
#include <sstream>

#include "citecrit/csv.hpp"
#include "citecrit/error.hpp"
#include "citecrit/resources.hpp"
#include "citecrit/text.hpp"

namespace citecrit {

namespace {

// Yields trimmed, non-comment lines with their 1-based line numbers.
template <typename Fn>
void for_each_entry(std::string_view contents, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= contents.size()) {
        const std::size_t nl = contents.find('\n', pos);
        std::string_view line = contents.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = text::trim(line);
        if (!line.empty()) fn(line, line_no);
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
}

void require_lowercase(std::string_view entry, std::size_t line, const std::string& name) {
    if (text::fold_case(entry) != entry) {
        throw ParseError(line, name + ": entry '" + std::string(entry) + "' is not lowercase");
    }
}

}  // namespace

Lexicon Lexicon::parse(std::string name, std::string_view contents) {
    Lexicon lex;
    lex.name_ = std::move(name);
    for_each_entry(contents, [&](std::string_view entry, std::size_t line) {
        require_lowercase(entry, line, lex.name_);
        const auto star = entry.find('*');
        if (star != std::string_view::npos && star + 1 != entry.size()) {
            throw ParseError(line, lex.name_ + ": wildcard allowed only as the final character");
        }
        std::istringstream words{std::string(entry)};
        std::vector<std::string> parts;
        for (std::string w; words >> w;) parts.push_back(w);
        if (parts.size() > 1) {
            if (star != std::string_view::npos) {
                throw ParseError(line, lex.name_ + ": wildcards are not supported in phrases");
            }
            lex.phrases_.push_back(std::move(parts));
        } else if (star != std::string_view::npos) {
            if (entry.size() == 1) throw ParseError(line, lex.name_ + ": bare wildcard entry");
            lex.prefixes_.emplace_back(entry.substr(0, entry.size() - 1));
        } else {
            lex.literals_.emplace(entry);
        }
    });
    std::stable_sort(lex.phrases_.begin(), lex.phrases_.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
    return lex;
}

Lexicon Lexicon::load(const std::string& name, const std::string& override_dir) {
    return parse(name, resources::load(name + ".txt", override_dir));
}

bool Lexicon::matches_word(std::string_view word) const {
    if (literals_.find(word) != literals_.end()) return true;
    return std::any_of(prefixes_.begin(), prefixes_.end(),
                       [&](const std::string& p) { return word.substr(0, p.size()) == p; });
}

std::size_t Lexicon::count_matches(std::span<const std::string> words) const {
    std::size_t matched = 0;
    std::size_t i = 0;
    while (i < words.size()) {
        std::size_t advance = 0;
        for (const auto& phrase : phrases_) {
            if (i + phrase.size() > words.size()) continue;
            if (std::equal(phrase.begin(), phrase.end(), words.begin() + static_cast<std::ptrdiff_t>(i))) {
                advance = phrase.size();
                break;
            }
        }
        if (advance == 0 && matches_word(words[i])) advance = 1;
        if (advance > 0) {
            matched += advance;
            i += advance;
        } else {
            ++i;
        }
    }
    return matched;
}

SentimentLexicon SentimentLexicon::parse(std::string_view csv_contents) {
    SentimentLexicon lex;
    std::istringstream in{std::string(csv_contents)};
    csv::Reader reader(in);
    const auto header = reader.next();
    if (!header || *header != std::vector<std::string>{"term", "valence", "subjectivity"}) {
        throw ParseError(1, "sentiment lexicon header must be term,valence,subjectivity");
    }
    while (const auto row = reader.next()) {
        if (row->size() == 1 && text::trim((*row)[0]).empty()) continue;
        if (row->size() != 3) throw ParseError(reader.line(), "sentiment lexicon rows need 3 columns");
        const std::string& term = (*row)[0];
        require_lowercase(term, reader.line(), "sentiment");
        const double valence = csv::parse_double((*row)[1], reader.line(), "valence");
        const double subjectivity = csv::parse_double((*row)[2], reader.line(), "subjectivity");
        if (valence < -1.0 || valence > 1.0 || subjectivity < 0.0 || subjectivity > 1.0) {
            throw ParseError(reader.line(), "sentiment weights out of range for '" + term + "'");
        }
        if (!lex.entries_.emplace(term, SentimentEntry{valence, subjectivity}).second) {
            throw ParseError(reader.line(), "duplicate sentiment term '" + term + "'");
        }
    }
    return lex;
}

SentimentLexicon SentimentLexicon::load(const std::string& override_dir) {
    return parse(resources::load("sentiment.csv", override_dir));
}

const SentimentEntry* SentimentLexicon::find(std::string_view word) const {
    const auto it = entries_.find(word);
    return it == entries_.end() ? nullptr : &it->second;
}

std::set<std::string, std::less<>> parse_word_set(std::string_view contents) {
    std::set<std::string, std::less<>> out;
    for_each_entry(contents, [&](std::string_view entry, std::size_t line) {
        require_lowercase(entry, line, "word list");
        out.emplace(entry);
    });
    return out;
}

}  // namespace citecrit
