#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace citecrit {

inline constexpr std::string_view kSentenceStart = "<s>";
inline constexpr std::string_view kUnknownToken = "<unk>";

/// Token-level language model used for the perplexity feature.
class LanguageModel {
public:
    virtual ~LanguageModel() = default;

    /// Number of tokens the model conditions on, plus one.
    virtual int order() const = 0;

    /// Natural-log probability of `token` after `context`. `context` holds
    /// exactly order() - 1 tokens, left-padded with "<s>".
    virtual double log_prob(std::span<const std::string> context, const std::string& token) const = 0;

    /// Case-folded tokens, punctuation included.
    virtual std::vector<std::string> tokenize(std::string_view text) const;
};

struct PerplexityResult {
    double avg_nll = 0.0;     // nats per token
    double perplexity = 0.0;  // exp(avg_nll)
    std::size_t tokens = 0;
};

/// Average negative log-likelihood of the text's tokens under `lm`.
PerplexityResult perplexity(std::string_view text, const LanguageModel& lm);
PerplexityResult perplexity_of_tokens(std::span<const std::string> tokens, const LanguageModel& lm);

struct NGramOptions {
    int order = 3;
    double alpha = 0.1;
    std::size_t min_count = 2;
    /// With an open vocabulary, tokens seen fewer than min_count times in
    /// training and unseen tokens map to "<unk>". A closed vocabulary keeps
    /// every training token and rejects unseen ones.
    bool open_vocabulary = true;
};

/// Additively smoothed n-gram model:
/// P(w | h) = (c(h, w) + alpha) / (c(h) + alpha * V), where V counts the
/// vocabulary plus "<unk>" when the vocabulary is open. "<s>" only ever
/// appears as context.
class NGramLM final : public LanguageModel {
public:
    static NGramLM train(std::span<const std::vector<std::string>> documents, const NGramOptions& options);
    static NGramLM train_texts(std::span<const std::string> texts, const NGramOptions& options);

    /// CSV `ngram,count` of top-order n-grams behind a `# citecrit-ngram v1`
    /// header line carrying the options.
    static NGramLM load(std::istream& in);
    void save(std::ostream& out) const;

    int order() const override { return options_.order; }
    double log_prob(std::span<const std::string> context, const std::string& token) const override;

    const NGramOptions& options() const { return options_; }
    /// V in the smoothing denominator.
    std::size_t vocabulary_size() const { return vocab_.size() + (options_.open_vocabulary ? 1 : 0); }
    const std::unordered_set<std::string>& vocabulary() const { return vocab_; }
    std::size_t total_tokens() const { return total_tokens_; }

private:
    std::string map_token(const std::string& token) const;
    void add_ngram(const std::string& key, std::size_t count);

    NGramOptions options_;
    std::unordered_set<std::string> vocab_;
    std::unordered_map<std::string, std::size_t> ngram_counts_;
    std::unordered_map<std::string, std::size_t> context_counts_;
    std::size_t total_tokens_ = 0;
};

}  // namespace citecrit
