#include "citecrit/textfeatures.hpp"

#include <algorithm>
#include <cmath>

#include "citecrit/error.hpp"
#include "citecrit/resources.hpp"
#include "citecrit/text.hpp"

namespace citecrit {

namespace {

// Right single quotation marks are folded to ASCII apostrophes so that
// "don’t" and "don't" hit the same entries.
std::string normalize_apostrophes(std::string word) {
    static const std::string curly = "\xE2\x80\x99";
    for (std::size_t pos = 0; (pos = word.find(curly, pos)) != std::string::npos;) {
        word.replace(pos, curly.size(), "'");
        ++pos;
    }
    return word;
}

void require_words(const TextAnalysis& a, const char* feature) {
    if (a.words.empty()) throw ValidationError(std::string(feature) + ": text contains no words");
}

double percent(std::size_t matched, std::size_t total) {
    return 100.0 * static_cast<double>(matched) / static_cast<double>(total);
}

std::size_t sentences_from(std::u32string_view s, const std::vector<text::Token>& tokens,
                           const std::set<std::string, std::less<>>& abbreviations) {
    std::size_t boundaries = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const text::Token& t = tokens[i];
        if (t.kind != text::TokenKind::punct) continue;
        const char32_t c = s[t.begin];
        if (c != U'.' && c != U'!' && c != U'?') continue;
        std::size_t q = t.end;
        if (q >= s.size() || !text::is_space(s[q])) continue;
        while (q < s.size() && text::is_space(s[q])) ++q;
        if (q >= s.size() || !text::is_uppercase(s[q])) continue;
        if (c == U'.' && i > 0 && tokens[i - 1].end == t.begin && text::is_wordlike(tokens[i - 1])) {
            const std::string prev = text::encode_utf8(
                text::fold_case(s.substr(tokens[i - 1].begin, tokens[i - 1].end - tokens[i - 1].begin)));
            if (abbreviations.count(prev)) continue;
            // Dotted abbreviations such as "u.s." arrive as u . s . tokens.
            if (i >= 3 && tokens[i - 2].kind == text::TokenKind::punct && s[tokens[i - 2].begin] == U'.' &&
                tokens[i - 2].end == tokens[i - 1].begin && tokens[i - 3].end == tokens[i - 2].begin) {
                const std::string dotted =
                    text::encode_utf8(text::fold_case(s.substr(tokens[i - 3].begin, t.begin - tokens[i - 3].begin)));
                if (abbreviations.count(dotted)) continue;
            }
        }
        ++boundaries;
    }
    return boundaries + 1;
}

}  // namespace

FeatureResources FeatureResources::load(const std::string& dir) {
    FeatureResources r;
    r.easy_words = parse_word_set(resources::load("easy_words.txt", dir));
    r.abbreviations = parse_word_set(resources::load("abbreviations.txt", dir));
    r.articles = Lexicon::load("articles", dir);
    r.prepositions = Lexicon::load("prepositions", dir);
    r.personal_pronouns = Lexicon::load("personal_pronouns", dir);
    r.impersonal_pronouns = Lexicon::load("impersonal_pronouns", dir);
    r.auxiliary_verbs = Lexicon::load("auxiliary_verbs", dir);
    r.adverbs = Lexicon::load("adverbs", dir);
    r.conjunctions = Lexicon::load("conjunctions", dir);
    r.negations = Lexicon::load("negations", dir);
    r.certitude = Lexicon::load("certitude", dir);
    r.conversation = Lexicon::load("conversation", dir);
    r.negators = Lexicon::load("negators", dir);
    r.intensifiers = Lexicon::load("intensifiers", dir);
    r.sentiment = SentimentLexicon::load(dir);
    return r;
}

TextAnalysis TextAnalysis::of(std::string_view text, const std::set<std::string, std::less<>>& abbreviations) {
    const std::u32string s = text::decode_utf8(text);
    const std::vector<text::Token> tokens = text::tokenize(s);
    TextAnalysis a;
    for (const text::Token& t : tokens) {
        if (!text::is_wordlike(t)) continue;
        a.words.push_back(normalize_apostrophes(
            text::encode_utf8(text::fold_case(std::u32string_view(s).substr(t.begin, t.end - t.begin)))));
        a.has_letter.push_back(t.kind == text::TokenKind::word);
    }
    a.sentences = sentences_from(s, tokens, abbreviations);
    return a;
}

std::size_t count_sentences(std::string_view text, const std::set<std::string, std::less<>>& abbreviations) {
    const std::u32string s = text::decode_utf8(text);
    return sentences_from(s, text::tokenize(s), abbreviations);
}

double readability(const TextAnalysis& a, const FeatureResources& res) {
    require_words(a, "readability");
    std::size_t difficult = 0;
    for (std::size_t i = 0; i < a.words.size(); ++i) {
        if (a.has_letter[i] && !res.easy_words.count(a.words[i])) ++difficult;
    }
    const double pdw = percent(difficult, a.words.size());
    const double asl = static_cast<double>(a.words.size()) / static_cast<double>(a.sentences);
    double raw = 0.1579 * pdw + 0.0496 * asl;
    if (pdw > 5.0) raw += 3.6365;
    return -raw;
}

double readability(std::string_view text, const FeatureResources& res) {
    return readability(TextAnalysis::of(text, res.abbreviations), res);
}

double analytic(const TextAnalysis& a, const FeatureResources& res) {
    require_words(a, "analytic");
    const std::size_t n = a.words.size();
    auto pct = [&](const Lexicon& lex) { return percent(lex.count_matches(a.words), n); };
    const double cdi = 30.0 + pct(res.articles) + pct(res.prepositions) - pct(res.personal_pronouns) -
                       pct(res.impersonal_pronouns) - pct(res.auxiliary_verbs) - pct(res.adverbs) -
                       pct(res.conjunctions) - pct(res.negations);
    return std::clamp(cdi, 1.0, 99.0);
}

double analytic(std::string_view text, const FeatureResources& res) {
    return analytic(TextAnalysis::of(text, res.abbreviations), res);
}

double lexicon_rate(const TextAnalysis& a, const Lexicon& lexicon) {
    if (a.words.empty()) throw ValidationError(lexicon.name() + ": text contains no words");
    return percent(lexicon.count_matches(a.words), a.words.size());
}

double lexicon_rate(std::string_view text, const Lexicon& lexicon) {
    return lexicon_rate(TextAnalysis::of(text, {}), lexicon);
}

Sentiment sentiment(const TextAnalysis& a, const FeatureResources& res, const FeatureConfig& config) {
    require_words(a, "sentiment");
    double valence_sum = 0.0;
    double subjectivity_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < a.words.size(); ++i) {
        if (res.intensifiers.matches_word(a.words[i])) continue;
        const SentimentEntry* entry = res.sentiment.find(a.words[i]);
        if (!entry) continue;
        bool negated = false;
        bool intensified = false;
        for (std::size_t back = 1; back <= config.window && back <= i; ++back) {
            const std::string& w = a.words[i - back];
            negated = negated || res.negators.matches_word(w);
            intensified = intensified || res.intensifiers.matches_word(w);
        }
        double valence = entry->valence;
        double subjectivity = entry->subjectivity;
        if (intensified) {
            valence = std::clamp(valence * config.intensifier_factor, -1.0, 1.0);
            subjectivity = std::clamp(subjectivity * config.intensifier_factor, 0.0, 1.0);
        }
        if (negated) valence *= -config.negation_factor;
        valence_sum += valence;
        subjectivity_sum += subjectivity;
        ++hits;
    }
    if (hits == 0) return {};
    const auto n = static_cast<double>(hits);
    return {subjectivity_sum / n, std::fabs(valence_sum / n)};
}

Sentiment sentiment(std::string_view text, const FeatureResources& res, const FeatureConfig& config) {
    return sentiment(TextAnalysis::of(text, res.abbreviations), res, config);
}

FeatureExtractor::FeatureExtractor(std::shared_ptr<const FeatureResources> resources,
                                   std::shared_ptr<const LanguageModel> lm, FeatureConfig config)
    : resources_(std::move(resources)), lm_(std::move(lm)), config_(config) {
    if (!resources_ || !lm_) throw ValidationError("feature extractor needs resources and a language model");
}

namespace {

template <typename Fn>
auto tagged(const char* feature, Fn&& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        throw Error(e.category(), std::string(feature) + ": " + e.what());
    }
}

}  // namespace

FeatureVector FeatureExtractor::featurize(std::string_view chunk_text) const {
    if (text::trim(chunk_text).empty()) throw ValidationError("featurize: empty chunk text");
    const TextAnalysis a = TextAnalysis::of(chunk_text, resources_->abbreviations);
    const FeatureResources& res = *resources_;
    FeatureVector f;
    f.readability = tagged("readability", [&] { return readability(a, res); });
    f.analytic = tagged("analytic", [&] { return analytic(a, res); });
    f.certitude = tagged("certitude", [&] { return lexicon_rate(a, res.certitude); });
    const Sentiment s = tagged("sentiment", [&] { return sentiment(a, res, config_); });
    f.subjectivity = s.subjectivity;
    f.polarity = s.polarity;
    f.conversation = tagged("conversation", [&] { return lexicon_rate(a, res.conversation); });
    const PerplexityResult p = tagged("perplexity", [&] { return perplexity(chunk_text, *lm_); });
    f.perplexity = p.avg_nll;
    f.perplexity_exp = p.perplexity;
    return f;
}

}  // namespace citecrit
