#pragma once

#include <array>
#include <memory>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "citecrit/language_model.hpp"
#include "citecrit/lexicon.hpp"

namespace citecrit {

/// The seven regressors, in output column order. `perplexity` is the average
/// negative log-likelihood per token in nats; `perplexity_exp` is its
/// exponential and is not a regressor.
struct FeatureVector {
    double readability = 0.0;
    double analytic = 0.0;
    double certitude = 0.0;
    double subjectivity = 0.0;
    double polarity = 0.0;
    double conversation = 0.0;
    double perplexity = 0.0;
    double perplexity_exp = 1.0;

    std::array<double, 7> regressors() const {
        return {readability, analytic, certitude, subjectivity, polarity, conversation, perplexity};
    }
    bool operator==(const FeatureVector&) const = default;
};

inline constexpr std::array<std::string_view, 7> kFeatureNames = {
    "readability", "analytic", "certitude", "subjectivity", "polarity", "conversation", "perplexity"};

/// Display names used in regression tables.
inline constexpr std::array<std::string_view, 7> kFeatureLabels = {
    "Readability", "Analytic", "Certitude", "Subjectivity", "Polarity", "Conversation", "Perplexity"};

struct FeatureConfig {
    double negation_factor = 0.5;
    double intensifier_factor = 1.3;
    std::size_t window = 2;
};

/// Word lists and lexicons behind the features. `load` reads each file from
/// `override_dir` when present there, else uses the compiled-in copy.
struct FeatureResources {
    std::set<std::string, std::less<>> easy_words;
    std::set<std::string, std::less<>> abbreviations;
    Lexicon articles, prepositions, personal_pronouns, impersonal_pronouns;
    Lexicon auxiliary_verbs, adverbs, conjunctions, negations;
    Lexicon certitude, conversation;
    Lexicon negators, intensifiers;
    SentimentLexicon sentiment;

    static FeatureResources load(const std::string& override_dir = {});
};

/// One tokenization of a text, shared by the lexicon-based features.
struct TextAnalysis {
    std::vector<std::string> words;  // folded word and number tokens
    std::vector<bool> has_letter;    // per word: contains a letter
    std::size_t sentences = 1;

    static TextAnalysis of(std::string_view text, const std::set<std::string, std::less<>>& abbreviations);
};

/// Sentences end at . ! or ? followed by whitespace and an uppercase letter,
/// unless the period closes a listed abbreviation. At least one sentence.
std::size_t count_sentences(std::string_view text, const std::set<std::string, std::less<>>& abbreviations);

/// Negated New Dale-Chall score: -(0.1579 PDW + 0.0496 ASL + 3.6365 [PDW > 5]).
double readability(std::string_view text, const FeatureResources& res);
double readability(const TextAnalysis& a, const FeatureResources& res);

/// 30 + articles + prepositions - personal pronouns - impersonal pronouns
/// - auxiliary verbs - adverbs - conjunctions - negations (percent of
/// words), clipped to [1, 99].
double analytic(std::string_view text, const FeatureResources& res);
double analytic(const TextAnalysis& a, const FeatureResources& res);

/// 100 * matched words / words.
double lexicon_rate(std::string_view text, const Lexicon& lexicon);
double lexicon_rate(const TextAnalysis& a, const Lexicon& lexicon);

struct Sentiment {
    double subjectivity = 0.0;
    double polarity = 0.0;
};

/// Mean subjectivity and |mean valence| over sentiment-lexicon hits. A
/// negator within `window` words before a hit multiplies its valence by
/// -negation_factor; an intensifier multiplies valence and subjectivity by
/// intensifier_factor (clipped). Intensifier words are not scored.
Sentiment sentiment(std::string_view text, const FeatureResources& res, const FeatureConfig& config = {});
Sentiment sentiment(const TextAnalysis& a, const FeatureResources& res, const FeatureConfig& config = {});

/// Computes all features of a chunk. Safe to share across threads.
class FeatureExtractor {
public:
    FeatureExtractor(std::shared_ptr<const FeatureResources> resources, std::shared_ptr<const LanguageModel> lm,
                     FeatureConfig config = {});

    /// Errors from an individual feature are rethrown with its name prefixed.
    FeatureVector featurize(std::string_view chunk_text) const;

    const FeatureResources& resources() const { return *resources_; }
    const LanguageModel& language_model() const { return *lm_; }
    const FeatureConfig& config() const { return config_; }

private:
    std::shared_ptr<const FeatureResources> resources_;
    std::shared_ptr<const LanguageModel> lm_;
    FeatureConfig config_;
};

}  // namespace citecrit
