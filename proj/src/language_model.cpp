#include "citecrit/language_model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "citecrit/csv.hpp"
#include "citecrit/error.hpp"
#include "citecrit/text.hpp"

namespace citecrit {

namespace {

constexpr char kSep = '\x1f';

std::string join_key(std::span<const std::string> parts) {
    std::string key;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) key.push_back(kSep);
        key += parts[i];
    }
    return key;
}

}  // namespace

std::vector<std::string> LanguageModel::tokenize(std::string_view text) const {
    return text::folded_tokens(text);
}

PerplexityResult perplexity_of_tokens(std::span<const std::string> tokens, const LanguageModel& lm) {
    if (tokens.empty()) throw ValidationError("perplexity: no tokens");
    const auto history = static_cast<std::size_t>(std::max(0, lm.order() - 1));
    std::vector<std::string> padded(history, std::string(kSentenceStart));
    padded.insert(padded.end(), tokens.begin(), tokens.end());
    double nll = 0.0;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        const std::span<const std::string> context(padded.data() + t, history);
        nll -= lm.log_prob(context, padded[t + history]);
    }
    PerplexityResult r;
    r.tokens = tokens.size();
    r.avg_nll = nll / static_cast<double>(tokens.size());
    r.perplexity = std::exp(r.avg_nll);
    return r;
}

PerplexityResult perplexity(std::string_view text, const LanguageModel& lm) {
    const std::vector<std::string> tokens = lm.tokenize(text);
    return perplexity_of_tokens(tokens, lm);
}

void NGramLM::add_ngram(const std::string& key, std::size_t count) {
    ngram_counts_[key] += count;
    const auto cut = key.rfind(kSep);
    context_counts_[cut == std::string::npos ? std::string() : key.substr(0, cut)] += count;
    total_tokens_ += count;
}

NGramLM NGramLM::train(std::span<const std::vector<std::string>> documents, const NGramOptions& options) {
    if (options.order < 1) throw ValidationError("n-gram order must be at least 1");
    if (!(options.alpha > 0.0) || !std::isfinite(options.alpha)) {
        throw ValidationError("smoothing alpha must be positive");
    }
    std::map<std::string, std::size_t> unigram;
    for (const auto& doc : documents) {
        for (const std::string& tok : doc) {
            if (tok == kSentenceStart || tok == kUnknownToken) {
                throw ValidationError("training text contains reserved token " + tok);
            }
            ++unigram[tok];
        }
    }
    if (unigram.empty()) throw ValidationError("cannot train a language model on an empty corpus");
    NGramLM lm;
    lm.options_ = options;
    for (const auto& [tok, count] : unigram) {
        if (!options.open_vocabulary || count >= options.min_count) lm.vocab_.insert(tok);
    }
    const auto history = static_cast<std::size_t>(options.order - 1);
    for (const auto& doc : documents) {
        std::vector<std::string> padded(history, std::string(kSentenceStart));
        for (const std::string& tok : doc) padded.push_back(lm.map_token(tok));
        for (std::size_t t = history; t < padded.size(); ++t) {
            lm.add_ngram(join_key(std::span<const std::string>(padded.data() + t - history, history + 1)), 1);
        }
    }
    return lm;
}

NGramLM NGramLM::train_texts(std::span<const std::string> texts, const NGramOptions& options) {
    std::vector<std::vector<std::string>> docs;
    docs.reserve(texts.size());
    for (const std::string& t : texts) docs.push_back(text::folded_tokens(t));
    return train(docs, options);
}

std::string NGramLM::map_token(const std::string& token) const {
    if (vocab_.count(token)) return token;
    if (!options_.open_vocabulary) {
        throw ValidationError("token '" + token + "' is outside the closed vocabulary");
    }
    return std::string(kUnknownToken);
}

double NGramLM::log_prob(std::span<const std::string> context, const std::string& token) const {
    const auto history = static_cast<std::size_t>(options_.order - 1);
    if (context.size() != history) {
        throw ValidationError("context must hold " + std::to_string(history) + " tokens");
    }
    std::vector<std::string> parts;
    parts.reserve(history + 1);
    for (const std::string& c : context) parts.push_back(c == kSentenceStart ? c : map_token(c));
    parts.push_back(map_token(token));
    const std::string key = join_key(parts);
    const auto cut = key.rfind(kSep);
    const std::string ctx = cut == std::string::npos ? std::string() : key.substr(0, cut);
    const auto n_it = ngram_counts_.find(key);
    const auto c_it = context_counts_.find(ctx);
    const double c_hw = n_it == ngram_counts_.end() ? 0.0 : static_cast<double>(n_it->second);
    const double c_h = c_it == context_counts_.end() ? 0.0 : static_cast<double>(c_it->second);
    const double alpha = options_.alpha;
    return std::log(c_hw + alpha) - std::log(c_h + alpha * static_cast<double>(vocabulary_size()));
}

void NGramLM::save(std::ostream& out) const {
    out << fmt::format("# citecrit-ngram v1 order={} alpha={} min_count={} open_vocabulary={}\n", options_.order,
                       options_.alpha, options_.min_count, options_.open_vocabulary ? "true" : "false");
    out << "ngram,count\n";
    std::vector<std::pair<std::string, std::size_t>> rows(ngram_counts_.begin(), ngram_counts_.end());
    std::sort(rows.begin(), rows.end());
    for (auto& [key, count] : rows) {
        std::string spaced = key;
        std::replace(spaced.begin(), spaced.end(), kSep, ' ');
        csv::write_row(out, {spaced, std::to_string(count)});
    }
}

NGramLM NGramLM::load(std::istream& in) {
    std::string header;
    if (!std::getline(in, header) || header.rfind("# citecrit-ngram v1", 0) != 0) {
        throw ParseError(1, "missing '# citecrit-ngram v1' header");
    }
    NGramOptions options;
    std::istringstream fields(header.substr(19));
    for (std::string kv; fields >> kv;) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ParseError(1, "malformed header field '" + kv + "'");
        const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
        if (key == "order") {
            options.order = static_cast<int>(csv::parse_int(value, 1, key));
        } else if (key == "alpha") {
            options.alpha = csv::parse_double(value, 1, key);
        } else if (key == "min_count") {
            options.min_count = static_cast<std::size_t>(csv::parse_int(value, 1, key));
        } else if (key == "open_vocabulary") {
            options.open_vocabulary = value == "true";
        } else {
            throw ParseError(1, "unknown header field '" + key + "'");
        }
    }
    if (options.order < 1 || !(options.alpha > 0.0)) throw ParseError(1, "invalid order or alpha");
    csv::Reader reader(in);
    const auto columns = reader.next();
    if (!columns || *columns != std::vector<std::string>{"ngram", "count"}) {
        throw ParseError(2, "expected column header ngram,count");
    }
    NGramLM lm;
    lm.options_ = options;
    while (const auto row = reader.next()) {
        const std::size_t line = reader.line() + 1;
        if (row->size() != 2) throw ParseError(line, "expected 2 columns");
        std::istringstream words((*row)[0]);
        std::vector<std::string> parts;
        for (std::string w; words >> w;) parts.push_back(w);
        if (parts.size() != static_cast<std::size_t>(options.order)) {
            throw ParseError(line, "n-gram does not have " + std::to_string(options.order) + " tokens");
        }
        const long long count = csv::parse_int((*row)[1], line, "count");
        if (count <= 0) throw ParseError(line, "n-gram counts must be positive");
        if (parts.back() == kSentenceStart) throw ParseError(line, "<s> cannot be predicted");
        if (parts.back() != kUnknownToken) lm.vocab_.insert(parts.back());
        lm.add_ngram(join_key(parts), static_cast<std::size_t>(count));
    }
    if (lm.ngram_counts_.empty()) throw ParseError(0, "language model file holds no n-grams");
    return lm;
}

}  // namespace citecrit
