#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace citecrit {

/// A word list. Entries are lowercase; a trailing `*` makes an entry match
/// by prefix; entries with spaces are multi-word phrases. File format: one
/// entry per line, `#` starts a comment.
class Lexicon {
public:
    Lexicon() = default;
    static Lexicon parse(std::string name, std::string_view contents);
    /// Built-in `<name>.txt`, or the file of that name in `override_dir`.
    static Lexicon load(const std::string& name, const std::string& override_dir = {});

    const std::string& name() const { return name_; }
    std::size_t size() const { return literals_.size() + prefixes_.size() + phrases_.size(); }

    /// True when a single-word entry (literal or prefix) matches `word`.
    bool matches_word(std::string_view word) const;

    /// Number of words in `words` covered by entries. Phrases are matched
    /// greedily, longest first, and no word is counted twice.
    std::size_t count_matches(std::span<const std::string> words) const;

    /// Single-word entries without a prefix wildcard.
    const std::set<std::string, std::less<>>& literals() const { return literals_; }

private:
    std::string name_;
    std::set<std::string, std::less<>> literals_;
    std::vector<std::string> prefixes_;
    std::vector<std::vector<std::string>> phrases_;  // longest first
};

struct SentimentEntry {
    double valence = 0.0;       // [-1, 1]
    double subjectivity = 0.0;  // [0, 1]
};

/// Sentiment lexicon from CSV `term,valence,subjectivity`.
class SentimentLexicon {
public:
    SentimentLexicon() = default;
    static SentimentLexicon parse(std::string_view csv_contents);
    static SentimentLexicon load(const std::string& override_dir = {});

    const SentimentEntry* find(std::string_view word) const;
    std::size_t size() const { return entries_.size(); }
    const std::map<std::string, SentimentEntry, std::less<>>& entries() const { return entries_; }

private:
    std::map<std::string, SentimentEntry, std::less<>> entries_;
};

/// Plain lowercase word set (easy words, abbreviations).
std::set<std::string, std::less<>> parse_word_set(std::string_view contents);

}  // namespace citecrit
