#include "citecrit/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "citecrit/chunking.hpp"
#include "citecrit/csv.hpp"
#include "citecrit/distributions.hpp"
#include "citecrit/embedding.hpp"
#include "citecrit/error.hpp"
#include "citecrit/text.hpp"

namespace citecrit::sim {

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

std::uint64_t Rng::next() { return engine_(); }

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw NumericError("Rng::below(0)");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t x = next();
        if (x >= threshold) return x % n;
    }
}

double Rng::normal() {
    if (spare_normal_) {
        const double z = *spare_normal_;
        spare_normal_.reset();
        return z;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_normal_ = r * std::sin(angle);
    return r * std::cos(angle);
}

double Rng::logistic() {
    double u = uniform();
    while (u == 0.0) u = uniform();
    return std::log(u / (1.0 - u));
}

int Rng::poisson(double mean) {
    if (mean <= 0.0) return 0;
    const double limit = std::exp(-mean);
    int k = 0;
    double prod = uniform();
    while (prod > limit) {
        ++k;
        prod *= uniform();
    }
    return k;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::string_view link_name(OutcomeLink link) {
    switch (link) {
        case OutcomeLink::linear: return "linear";
        case OutcomeLink::logit: return "logit";
        case OutcomeLink::probit: return "probit";
    }
    return "?";
}

OutcomeLink parse_link(std::string_view name) {
    if (name == "linear") return OutcomeLink::linear;
    if (name == "logit") return OutcomeLink::logit;
    if (name == "probit") return OutcomeLink::probit;
    throw Error(ErrorCategory::config, fmt::format("unknown outcome link '{}' (linear, logit, probit)", name));
}

bool PlantedModel::intercept_only() const {
    return std::all_of(slopes.begin(), slopes.end(), [](double b) { return b == 0.0; });
}

double PlantedModel::index(const FeatureVector& x) const {
    const auto r = x.regressors();
    double eta = intercept;
    for (std::size_t j = 0; j < r.size(); ++j) eta += slopes[j] * r[j];
    return eta;
}

namespace {

double apply_link(OutcomeLink link, double eta) {
    switch (link) {
        case OutcomeLink::linear: return eta;
        case OutcomeLink::logit: return dist::logistic_cdf(eta);
        case OutcomeLink::probit: return dist::normal_cdf(eta);
    }
    return eta;
}

}  // namespace

double PlantedModel::probability(const FeatureVector& x) const { return apply_link(link, index(x)); }

// ---------------------------------------------------------------------------
// Presets and spec files

namespace {

constexpr std::array<double, 7> kChatSlopes = {0.0009, 0.0004, -0.0014, 0.0124, -0.0240, -0.0032, -0.0302};
constexpr std::array<double, 7> kRankSlopes = {-0.0035, 0.0004, -0.0412, 0.1841, 0.1886, 0.0690, -0.0512};
constexpr std::array<double, 7> kRagSlopes = {0.0015, 0.0004, 0.0058, 0.0391, -0.0917, -0.0121, -0.0323};
constexpr double kChatRate = 0.07;
constexpr double kRagRate = 0.19;

PlantedModel constant_model(double rate) {
    PlantedModel m;
    m.base_rate = rate;
    return m;
}

}  // namespace

SimSpec preset(std::string_view name) {
    SimSpec s;
    s.citation = constant_model(kChatRate);
    s.rag_citation = constant_model(kRagRate);
    if (name == "null") {
        s.n_queries = 200;
    } else if (name == "chat_citation") {
        s.n_queries = 700;
        s.citation.slopes = kChatSlopes;
    } else if (name == "ranking") {
        s.n_queries = 2900;
        s.ranking.slopes = kRankSlopes;
    } else if (name == "rag_citation") {
        s.n_queries = 2500;
        s.rag_citation.slopes = kRagSlopes;
    } else {
        throw Error(ErrorCategory::config, fmt::format("unknown simulator preset '{}'", name));
    }
    return s;
}

std::vector<std::string> preset_names() { return {"null", "chat_citation", "ranking", "rag_citation"}; }

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

[[noreturn]] void config_fail(const std::string& msg) { throw Error(ErrorCategory::config, msg); }

void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) config_fail(fmt::format("{}: expected an object", where));
    for (const auto& [key, value] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            config_fail(fmt::format("{}: unknown key '{}'", where, key));
        }
    }
}

template <typename T>
void read_number(const json& j, const char* key, T& out, std::string_view where) {
    const auto it = j.find(key);
    if (it == j.end()) return;
    if (!it->is_number()) config_fail(fmt::format("{}.{} must be a number", where, key));
    if constexpr (std::is_unsigned_v<T>) {
        if (!it->is_number_unsigned()) config_fail(fmt::format("{}.{} must be a non-negative integer", where, key));
    }
    out = it->get<T>();
}

void read_slopes(const json& j, std::array<double, 7>& slopes, std::string_view where) {
    const auto it = j.find("betas");
    if (it == j.end()) return;
    if (!it->is_object()) config_fail(fmt::format("{}.betas must be an object", where));
    for (const auto& [key, value] : it->items()) {
        const auto pos = std::find(kFeatureNames.begin(), kFeatureNames.end(), key);
        if (pos == kFeatureNames.end()) config_fail(fmt::format("{}.betas: unknown feature '{}'", where, key));
        if (!value.is_number()) config_fail(fmt::format("{}.betas.{} must be a number", where, key));
        slopes[static_cast<std::size_t>(pos - kFeatureNames.begin())] = value.get<double>();
    }
}

PlantedModel read_model(const json& j, PlantedModel m, std::string_view where) {
    check_keys(j, where, {"link", "intercept", "base_rate", "betas"});
    if (auto it = j.find("link"); it != j.end()) {
        if (!it->is_string()) config_fail(fmt::format("{}.link must be a string", where));
        m.link = parse_link(it->get<std::string>());
    }
    if (j.contains("intercept")) {
        read_number(j, "intercept", m.intercept, where);
        m.base_rate.reset();
    }
    if (auto it = j.find("base_rate"); it != j.end()) {
        if (it->is_null()) {
            m.base_rate.reset();
        } else {
            double r = 0.0;
            read_number(j, "base_rate", r, where);
            if (!(r > 0.0 && r < 1.0)) config_fail(fmt::format("{}.base_rate must lie in (0, 1)", where));
            m.base_rate = r;
        }
    }
    read_slopes(j, m.slopes, where);
    return m;
}

ordered_json slopes_json(const std::array<double, 7>& slopes) {
    ordered_json b = ordered_json::object();
    for (std::size_t i = 0; i < slopes.size(); ++i) b[std::string(kFeatureNames[i])] = slopes[i];
    return b;
}

ordered_json model_json(const PlantedModel& m) {
    ordered_json j;
    j["link"] = link_name(m.link);
    if (m.base_rate) {
        j["base_rate"] = *m.base_rate;
    } else {
        j["intercept"] = m.intercept;
    }
    j["betas"] = slopes_json(m.slopes);
    return j;
}

std::vector<double> read_weights(const json& j, const char* key, std::vector<double> current, std::string_view where) {
    const auto it = j.find(key);
    if (it == j.end()) return current;
    if (!it->is_array() || it->empty()) config_fail(fmt::format("{}.{} must be a non-empty array", where, key));
    std::vector<double> w;
    for (const json& v : *it) {
        if (!v.is_number() || v.get<double>() < 0.0) {
            config_fail(fmt::format("{}.{} entries must be non-negative numbers", where, key));
        }
        w.push_back(v.get<double>());
    }
    if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0) config_fail(fmt::format("{}.{} sums to zero", where, key));
    return w;
}

}  // namespace

SimSpec spec_from_json(const json& j, SimSpec s) {
    check_keys(j, "simulate",
               {"preset", "seed", "n_queries", "pages_per_query", "sentences_mean", "sentences_max", "citation",
                "ranking", "rag_citation", "unlisted_if_cited", "text", "diversity", "diversity_gap"});
    if (auto it = j.find("preset"); it != j.end()) {
        if (!it->is_string()) config_fail("simulate.preset must be a string");
        s = preset(it->get<std::string>());
    }
    read_number(j, "seed", s.seed, "simulate");
    read_number(j, "n_queries", s.n_queries, "simulate");
    read_number(j, "pages_per_query", s.pages_per_query, "simulate");
    read_number(j, "sentences_mean", s.sentences_mean, "simulate");
    read_number(j, "sentences_max", s.sentences_max, "simulate");
    read_number(j, "unlisted_if_cited", s.unlisted_if_cited, "simulate");
    if (auto it = j.find("citation"); it != j.end()) s.citation = read_model(*it, s.citation, "simulate.citation");
    if (auto it = j.find("rag_citation"); it != j.end()) {
        s.rag_citation = read_model(*it, s.rag_citation, "simulate.rag_citation");
    }
    if (auto it = j.find("ranking"); it != j.end()) {
        check_keys(*it, "simulate.ranking", {"link", "betas"});
        if (auto l = it->find("link"); l != it->end()) {
            const OutcomeLink link = parse_link(l->is_string() ? l->get<std::string>() : "");
            if (link == OutcomeLink::linear) config_fail("simulate.ranking.link must be logit or probit");
            s.ranking.link = link == OutcomeLink::logit ? Link::logit : Link::probit;
        }
        read_slopes(*it, s.ranking.slopes, "simulate.ranking");
    }
    if (auto it = j.find("text"); it != j.end()) {
        const json& t = *it;
        constexpr std::string_view w = "simulate.text";
        check_keys(t, w,
                   {"min_words", "max_words", "max_chars", "hard_page_rate", "easy_share_max", "hard_share_min",
                    "hard_share_max", "analytic_min", "analytic_max", "analytic_power", "certitude_weights", "conversation_weights",
                    "sentiment_weights", "sentiment_consistency", "predictable_min", "predictable_max", "predictable_power",
                    "stock_phrase_words", "stock_phrases", "topic_share", "topic_words"});
        TextGeneratorParams& p = s.text;
        read_number(t, "min_words", p.min_words, w);
        read_number(t, "max_words", p.max_words, w);
        read_number(t, "max_chars", p.max_chars, w);
        read_number(t, "hard_page_rate", p.hard_page_rate, w);
        read_number(t, "easy_share_max", p.easy_share_max, w);
        read_number(t, "hard_share_min", p.hard_share_min, w);
        read_number(t, "hard_share_max", p.hard_share_max, w);
        read_number(t, "analytic_min", p.analytic_min, w);
        read_number(t, "analytic_max", p.analytic_max, w);
        read_number(t, "analytic_power", p.analytic_power, w);
        p.certitude_weights = read_weights(t, "certitude_weights", p.certitude_weights, w);
        p.conversation_weights = read_weights(t, "conversation_weights", p.conversation_weights, w);
        p.sentiment_weights = read_weights(t, "sentiment_weights", p.sentiment_weights, w);
        read_number(t, "sentiment_consistency", p.sentiment_consistency, w);
        read_number(t, "predictable_min", p.predictable_min, w);
        read_number(t, "predictable_max", p.predictable_max, w);
        read_number(t, "predictable_power", p.predictable_power, w);
        read_number(t, "stock_phrase_words", p.stock_phrase_words, w);
        read_number(t, "stock_phrases", p.stock_phrases, w);
        read_number(t, "topic_share", p.topic_share, w);
        read_number(t, "topic_words", p.topic_words, w);
    }
    if (auto it = j.find("diversity"); it != j.end()) {
        if (it->is_null()) {
            s.diversity.reset();
        } else {
            check_keys(*it, "simulate.diversity", {"core_share", "core_words"});
            DiversityPlan d = s.diversity.value_or(DiversityPlan{});
            read_number(*it, "core_share", d.core_share, "simulate.diversity");
            read_number(*it, "core_words", d.core_words, "simulate.diversity");
            s.diversity = d;
        }
    }
    // diversity_gap is applied by the caller through plant_diversity.
    if (auto it = j.find("diversity_gap"); it != j.end() && !it->is_number()) {
        config_fail("simulate.diversity_gap must be a number");
    }
    if (s.n_queries == 0) config_fail("simulate.n_queries must be positive");
    if (s.pages_per_query < 2 || s.pages_per_query > static_cast<std::size_t>(kMaxRank)) {
        config_fail(fmt::format("simulate.pages_per_query must lie in 2..{}", kMaxRank));
    }
    if (s.sentences_mean < 1.0 || s.sentences_max < 1) config_fail("simulate: need at least one sentence per response");
    if (s.unlisted_if_cited < 0.0 || s.unlisted_if_cited > 1.0) config_fail("simulate.unlisted_if_cited must lie in [0, 1]");
    if (s.text.min_words < 6 || s.text.max_words < s.text.min_words) {
        config_fail("simulate.text: need 6 <= min_words <= max_words");
    }
    if (s.text.analytic_min < -0.6 || s.text.analytic_max > 0.6 || s.text.analytic_min > s.text.analytic_max) {
        config_fail("simulate.text: need -0.6 <= analytic_min <= analytic_max <= 0.6");
    }
    if (s.diversity && (s.diversity->core_share < 0.0 || s.diversity->core_share > 1.0)) {
        config_fail("simulate.diversity.core_share must lie in [0, 1]");
    }
    return s;
}

ordered_json spec_to_json(const SimSpec& s) {
    ordered_json j;
    j["seed"] = s.seed;
    j["n_queries"] = s.n_queries;
    j["pages_per_query"] = s.pages_per_query;
    j["sentences_mean"] = s.sentences_mean;
    j["sentences_max"] = s.sentences_max;
    j["citation"] = model_json(s.citation);
    j["ranking"] = {{"link", s.ranking.link == Link::logit ? "logit" : "probit"},
                    {"betas", slopes_json(s.ranking.slopes)}};
    j["rag_citation"] = model_json(s.rag_citation);
    j["unlisted_if_cited"] = s.unlisted_if_cited;
    const TextGeneratorParams& p = s.text;
    j["text"] = {{"min_words", p.min_words},
                 {"max_words", p.max_words},
                 {"max_chars", p.max_chars},
                 {"hard_page_rate", p.hard_page_rate},
                 {"easy_share_max", p.easy_share_max},
                 {"hard_share_min", p.hard_share_min},
                 {"hard_share_max", p.hard_share_max},
                 {"analytic_min", p.analytic_min},
                 {"analytic_max", p.analytic_max},
                 {"analytic_power", p.analytic_power},
                 {"certitude_weights", p.certitude_weights},
                 {"conversation_weights", p.conversation_weights},
                 {"sentiment_weights", p.sentiment_weights},
                 {"sentiment_consistency", p.sentiment_consistency},
                 {"predictable_min", p.predictable_min},
                 {"predictable_max", p.predictable_max},
                 {"predictable_power", p.predictable_power},
                 {"stock_phrase_words", p.stock_phrase_words},
                 {"stock_phrases", p.stock_phrases},
                 {"topic_share", p.topic_share},
                 {"topic_words", p.topic_words}};
    if (s.diversity) {
        j["diversity"] = {{"core_share", s.diversity->core_share}, {"core_words", s.diversity->core_words}};
    }
    return j;
}

// ---------------------------------------------------------------------------
// Text generation

namespace {

bool plain_word(std::string_view w) {
    return !w.empty() && std::all_of(w.begin(), w.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

/// Words of one class split by difficulty. `get` falls back to the other
/// half when one is empty.
struct Pool {
    std::vector<std::string> easy, hard;

    const std::vector<std::string>& get(bool want_hard) const {
        if (want_hard) return hard.empty() ? easy : hard;
        return easy.empty() ? hard : easy;
    }
    bool empty() const { return easy.empty() && hard.empty(); }
};

struct Vocabulary {
    Pool content, analytic_up, analytic_down, certitude, conversation;
    /// Sentiment words by [negative/positive][weak/strong valence][low/high subjectivity],
    /// so that polarity and subjectivity can be driven separately.
    Pool sentiment[2][2][2];
    std::vector<std::vector<std::string>> stock_easy, stock_hard;
};

struct Classifier {
    const FeatureResources& res;

    std::vector<const Lexicon*> all() const {
        return {&res.articles,  &res.prepositions, &res.personal_pronouns, &res.impersonal_pronouns,
                &res.auxiliary_verbs, &res.adverbs, &res.conjunctions, &res.negations,
                &res.certitude, &res.conversation, &res.negators,     &res.intensifiers};
    }
    /// True when `w` hits no lexicon except those in `except`.
    bool only_in(std::string_view w, std::initializer_list<const Lexicon*> except, bool sentiment_ok = false) const {
        if (!sentiment_ok && res.sentiment.find(w)) return false;
        for (const Lexicon* l : all()) {
            if (std::find(except.begin(), except.end(), l) != except.end()) continue;
            if (l->matches_word(w)) return false;
        }
        return true;
    }
    bool easy(std::string_view w) const { return res.easy_words.count(w) > 0; }
};

constexpr std::array<std::string_view, 36> kSyllables = {
    "ba", "ce", "di", "fo", "gu", "ka", "le", "mi", "no", "pu", "ra", "se", "ti", "vo", "zu", "xe", "qua", "ny",
    "bar", "cen", "dor", "fel", "gim", "hul", "kor", "lem", "mur", "nel", "por", "quin", "ros", "sul", "tev", "vor",
    "wen", "zel"};

Vocabulary build_vocabulary(const FeatureResources& res, const TextGeneratorParams& p) {
    const Classifier c{res};
    Vocabulary v;
    auto add = [&](Pool& pool, const std::string& w) { (c.easy(w) ? pool.easy : pool.hard).push_back(w); };
    for (const std::string& w : res.easy_words) {
        if (w.size() >= 3 && plain_word(w) && c.only_in(w, {})) v.content.easy.push_back(w);
    }
    Rng rng(0xC17EC217ULL);
    std::set<std::string> hard;
    std::size_t guard = 0;
    while (hard.size() < v.content.easy.size() && ++guard < 200000) {
        std::string w;
        const std::size_t n = 2 + rng.below(2);
        for (std::size_t i = 0; i < n; ++i) w += kSyllables[rng.below(kSyllables.size())];
        if (w.size() < 5 || w.size() > 8 || c.easy(w) || !c.only_in(w, {})) continue;
        hard.insert(w);
    }
    v.content.hard.assign(hard.begin(), hard.end());
    rng.shuffle(v.content.hard);

    auto literals_of = [&](std::initializer_list<const Lexicon*> lexicons, Pool& out) {
        std::set<std::string> chosen;
        for (const Lexicon* l : lexicons) {
            for (const std::string& w : l->literals()) {
                if (plain_word(w) && c.only_in(w, lexicons)) chosen.insert(w);
            }
        }
        for (const std::string& w : chosen) add(out, w);
    };
    literals_of({&res.articles, &res.prepositions}, v.analytic_up);
    literals_of({&res.personal_pronouns, &res.impersonal_pronouns, &res.auxiliary_verbs}, v.analytic_down);
    literals_of({&res.certitude}, v.certitude);
    literals_of({&res.conversation}, v.conversation);
    for (const auto& [w, e] : res.sentiment.entries()) {
        if (!plain_word(w) || !c.only_in(w, {}, true)) continue;
        const double magnitude = std::abs(e.valence);
        if (magnitude < 0.2) continue;
        add(v.sentiment[e.valence > 0][magnitude >= 0.55][e.subjectivity >= 0.75], w);
    }
    const std::pair<const char*, const Pool*> pools[] = {
        {"content words", &v.content},  {"articles/prepositions", &v.analytic_up},
        {"pronouns/auxiliaries", &v.analytic_down}, {"certitude", &v.certitude}, {"conversation", &v.conversation}};
    for (const auto& [name, pool] : pools) {
        if (pool->empty()) throw ValidationError(fmt::format("simulator: lexicons leave no {} to draw from", name));
    }
    for (int sign = 0; sign < 2; ++sign) {
        for (int strong = 0; strong < 2; ++strong) {
            for (int subjective = 0; subjective < 2; ++subjective) {
                if (v.sentiment[sign][strong][subjective].empty()) {
                    throw ValidationError(fmt::format(
                        "simulator: sentiment lexicon has no {} {} entries of {} subjectivity",
                        strong ? "strong" : "weak", sign ? "positive" : "negative", subjective ? "high" : "low"));
                }
            }
        }
    }
    for (std::size_t i = 0; i < p.stock_phrases; ++i) {
        std::vector<std::string> e, h;
        for (std::size_t k = 0; k < p.stock_phrase_words; ++k) {
            e.push_back(rng.pick(v.content.easy));
            h.push_back(rng.pick(v.content.hard));
        }
        v.stock_easy.push_back(std::move(e));
        v.stock_hard.push_back(std::move(h));
    }
    return v;
}

struct Topic {
    std::vector<std::string> easy, hard;
};

Topic draw_topic(Rng& rng, const Vocabulary& v, std::size_t n) {
    Topic t;
    for (std::size_t i = 0; i < n; ++i) {
        t.easy.push_back(rng.pick(v.content.easy));
        t.hard.push_back(rng.pick(v.content.hard));
    }
    return t;
}

std::size_t draw_weighted(Rng& rng, const std::vector<double>& weights) {
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (u < weights[i]) return i;
        u -= weights[i];
    }
    return weights.size() - 1;
}

void capitalize(std::string& w) {
    if (!w.empty() && w[0] >= 'a' && w[0] <= 'z') w[0] = static_cast<char>(w[0] - 'a' + 'A');
}

std::string render_sentences(std::vector<std::vector<std::string>> sentences) {
    std::string out;
    for (auto& s : sentences) {
        if (s.empty()) continue;
        capitalize(s.front());
        for (const std::string& w : s) {
            if (!out.empty() && out.back() != ' ') out += ' ';
            out += w;
        }
        out += '.';
    }
    return out;
}

double skewed(Rng& rng, double lo, double hi, double power) {
    return lo + (hi - lo) * std::pow(rng.uniform(), power);
}

struct Unit {
    std::vector<std::string> words;
    bool droppable = false;  // a single content word
};

/// One page segment built from feature drivers. `core` (when given) replaces
/// content words with probability core_share; the choice is drawn for every
/// word whether or not it is used, so different shares see the same stream.
std::string compose_segment(Rng& rng, const Vocabulary& v, const TextGeneratorParams& p, const Topic& topic,
                            const Topic* core, double core_share) {
    for (int attempt = 0;; ++attempt) {
        const std::size_t words = p.min_words + rng.below(p.max_words - p.min_words + 1);
        const double hard_share = rng.bernoulli(p.hard_page_rate) ? rng.uniform(p.hard_share_min, p.hard_share_max)
                                                                  : rng.uniform(0.0, p.easy_share_max);
        const double analytic = skewed(rng, p.analytic_min, p.analytic_max, p.analytic_power);
        std::size_t function_words = static_cast<std::size_t>(std::lround(std::abs(analytic) * words));
        const std::size_t cert = draw_weighted(rng, p.certitude_weights);
        const std::size_t conv = draw_weighted(rng, p.conversation_weights);
        const std::size_t senti = draw_weighted(rng, p.sentiment_weights);
        const bool positive = rng.bernoulli(0.5);
        const bool strong = rng.bernoulli(0.5);
        const bool subjective = rng.bernoulli(0.5);
        const double predictable = skewed(rng, p.predictable_min, p.predictable_max, p.predictable_power);
        const std::size_t sentences = 1 + rng.below(3);

        const std::size_t fixed = cert + conv + senti;
        if (function_words + fixed + 4 > words) function_words = words > fixed + 4 ? words - fixed - 4 : 0;
        const std::size_t content = words > function_words + fixed ? words - function_words - fixed : 1;
        const std::size_t L = std::max<std::size_t>(1, p.stock_phrase_words);
        std::size_t phrases = static_cast<std::size_t>(predictable * static_cast<double>(content) /
                                                           static_cast<double>(L) +
                                                       rng.uniform());
        phrases = std::min(phrases, content / L);

        std::vector<Unit> units;
        auto word_of = [&](const Pool& pool) { return rng.pick(pool.get(rng.bernoulli(hard_share))); };
        for (std::size_t i = 0; i < phrases; ++i) {
            const bool hard = rng.bernoulli(hard_share);
            units.push_back({rng.pick(hard ? v.stock_hard : v.stock_easy), false});
        }
        for (std::size_t i = phrases * L; i < content; ++i) {
            const bool hard = rng.bernoulli(hard_share);
            const double u_core = rng.uniform();
            const std::string* core_word = nullptr;
            if (core) core_word = &rng.pick(hard ? core->hard : core->easy);
            const bool from_topic = rng.bernoulli(p.topic_share);
            const std::string& topic_word = rng.pick(hard ? topic.hard : topic.easy);
            const std::string& pool_word = rng.pick(v.content.get(hard));
            const std::string& w = (core_word && u_core < core_share) ? *core_word
                                   : from_topic                       ? topic_word
                                                                      : pool_word;
            units.push_back({{w}, true});
        }
        const Pool& function_pool = analytic >= 0.0 ? v.analytic_up : v.analytic_down;
        for (std::size_t i = 0; i < function_words; ++i) units.push_back({{word_of(function_pool)}, false});
        for (std::size_t i = 0; i < cert; ++i) units.push_back({{word_of(v.certitude)}, false});
        for (std::size_t i = 0; i < conv; ++i) units.push_back({{word_of(v.conversation)}, false});
        for (std::size_t i = 0; i < senti; ++i) {
            const bool same = rng.bernoulli(p.sentiment_consistency);
            units.push_back({{word_of(v.sentiment[positive == same][strong][subjective])}, false});
        }
        rng.shuffle(units);

        auto render = [&] {
            std::vector<std::vector<std::string>> parts(sentences);
            for (std::size_t i = 0; i < units.size(); ++i) {
                auto& target = parts[i * sentences / units.size()];
                target.insert(target.end(), units[i].words.begin(), units[i].words.end());
            }
            return render_sentences(std::move(parts));
        };
        std::string out = render();
        while (text::count_code_points(out) > p.max_chars) {
            auto it = std::find_if(units.rbegin(), units.rend(), [](const Unit& u) { return u.droppable; });
            if (it == units.rend() || units.size() <= sentences) break;
            units.erase(std::next(it).base());
            out = render();
        }
        if (text::count_code_points(out) <= p.max_chars) return out;
        if (attempt >= 50) {
            throw Error(ErrorCategory::config,
                        fmt::format("simulator: cannot fit a page into {} characters; lower max_words", p.max_chars));
        }
    }
}

std::string compose_sentence(Rng& rng, const Vocabulary& v, const Topic& topic) {
    std::vector<std::string> words;
    const std::size_t n = 8 + rng.below(5);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = rng.uniform();
        words.push_back(u < 0.4 ? rng.pick(topic.easy) : u < 0.6 ? rng.pick(topic.hard) : rng.pick(v.content.easy));
    }
    return render_sentences({std::move(words)});
}

std::string compose_query(Rng& rng, const Topic& topic) {
    std::vector<std::string> words = {"how", "does"};
    const std::size_t n = 2 + rng.below(3);
    for (std::size_t i = 0; i < n; ++i) words.push_back(rng.pick(topic.easy));
    words.push_back("work");
    std::string q;
    for (const auto& w : words) q += (q.empty() ? "" : " ") + w;
    capitalize(q);
    return q + "?";
}

std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const std::size_t j = s.find(' ', i);
        const std::size_t end = j == std::string_view::npos ? s.size() : j;
        if (end > i) out.emplace_back(s.substr(i, end - i));
        i = end + 1;
    }
    return out;
}

/// A run of consecutive words, copied verbatim from `segment`.
std::string word_window(Rng& rng, std::string_view segment, std::size_t min_len, std::size_t max_len) {
    const auto words = split_words(segment);
    const std::size_t k = std::min(words.size(), min_len + rng.below(max_len - min_len + 1));
    const std::size_t start = rng.below(words.size() - k + 1);
    std::string out;
    for (std::size_t i = start; i < start + k; ++i) out += (i == start ? "" : " ") + words[i];
    return out;
}

std::string query_id_of(std::size_t q) { return fmt::format("q{:05d}", q + 1); }
std::string web_id_of(std::size_t q, std::size_t k) { return fmt::format("q{:05d}-w{:02d}", q + 1, k + 1); }
std::string url_of(std::size_t q, std::size_t k) {
    return fmt::format("https://site{}.example.org/q{:05d}/{}", k + 1, q + 1, k + 1);
}

std::shared_ptr<const FeatureResources> resources_or_default(std::shared_ptr<const FeatureResources> r) {
    return r ? r : std::make_shared<const FeatureResources>(FeatureResources::load());
}

enum Stream : std::uint64_t { kDraftStream = 1, kOutcomeStream = 2, kCalibrationStream = 3, kFixtureStream = 4 };

/// Texts of one query before any outcome depending on features is drawn.
struct QueryDraft {
    Topic topic;
    std::string query_text;
    std::vector<std::string> pages;
    std::vector<int> rag_cited;  // drawn up front in diversity mode only
};

QueryDraft draft_query(const SimSpec& spec, const Vocabulary& v, std::uint64_t seed, double rag_rate) {
    Rng rng(seed);
    QueryDraft d;
    d.topic = draw_topic(rng, v, spec.text.topic_words);
    d.query_text = compose_query(rng, d.topic);
    std::optional<Topic> core;
    if (spec.diversity) {
        core = draw_topic(rng, v, spec.diversity->core_words);
        for (std::size_t k = 0; k < spec.pages_per_query; ++k) d.rag_cited.push_back(rng.bernoulli(rag_rate) ? 1 : 0);
    }
    for (std::size_t k = 0; k < spec.pages_per_query; ++k) {
        const bool use_core = core && d.rag_cited[k];
        d.pages.push_back(compose_segment(rng, v, spec.text, d.topic, use_core ? &*core : nullptr,
                                          use_core ? spec.diversity->core_share : 0.0));
    }
    return d;
}

/// Sets the intercept so that the mean probability over `features` equals
/// the base rate.
PlantedModel calibrate(PlantedModel m, std::span<const FeatureVector> features, std::string_view what) {
    if (!m.base_rate) return m;
    const double rate = *m.base_rate;
    m.intercept = 0.0;
    double mean_index = 0.0;
    for (const FeatureVector& x : features) mean_index += m.index(x);
    mean_index /= static_cast<double>(features.size());
    if (m.link == OutcomeLink::linear) {
        m.intercept = rate - mean_index;
        return m;
    }
    auto gap = [&](double a) {
        PlantedModel t = m;
        t.intercept = a;
        double s = 0.0;
        for (const FeatureVector& x : features) s += t.probability(x);
        return s / static_cast<double>(features.size()) - rate;
    };
    const double lo = -60.0 - mean_index, hi = 60.0 - mean_index;
    if (gap(lo) > 0.0 || gap(hi) < 0.0) {
        throw Error(ErrorCategory::config, fmt::format("{} model: base rate {} cannot be reached", what, rate));
    }
    m.intercept = dist::find_root(gap, {lo, hi}, 1e-12);
    return m;
}

void check_probability(double p, const PlantedModel& m, std::string_view what, const std::string& web_id) {
    if (!(p > 0.0 && p < 1.0)) {
        throw Error(ErrorCategory::config,
                    fmt::format("infeasible {} model: {} link gives probability {} on page {}, outside (0, 1)", what,
                                link_name(m.link), p, web_id));
    }
}

}  // namespace

double conditional_scale(std::span<const double> p) {
    auto g = [&](double r) {
        double prod = 1.0;
        for (double pk : p) prod *= 1.0 - pk * r;
        return 1.0 - prod - r;
    };
    if (g(1.0) >= 0.0) return 1.0;
    double lo = 1e-9;
    if (g(lo) <= 0.0) throw NumericError("conditional citation draw: sum of probabilities too close to 1");
    return dist::find_root(g, {lo, 1.0}, 1e-15);
}

SimOutput generate(const SimSpec& spec, std::shared_ptr<const FeatureResources> resources) {
    resources = resources_or_default(std::move(resources));
    const Vocabulary vocab = build_vocabulary(*resources, spec.text);
    const std::size_t K = spec.pages_per_query;
    if (K == 0 || K > static_cast<std::size_t>(kMaxRank)) {
        throw Error(ErrorCategory::config, fmt::format("pages_per_query must lie in 1..{}", kMaxRank));
    }
    double rag_constant = 0.0;
    if (spec.diversity) {
        if (!spec.rag_citation.intercept_only()) {
            throw Error(ErrorCategory::config, "diversity planting needs an intercept-only dataset 2 model");
        }
        rag_constant = spec.rag_citation.base_rate ? *spec.rag_citation.base_rate
                                                   : apply_link(spec.rag_citation.link, spec.rag_citation.intercept);
        check_probability(rag_constant, spec.rag_citation, "dataset 2", "(all)");
    }

    std::vector<QueryDraft> drafts(spec.n_queries);
    const std::uint64_t draft_seed = derive_seed(spec.seed, kDraftStream);
    for (std::size_t q = 0; q < spec.n_queries; ++q) {
        drafts[q] = draft_query(spec, vocab, derive_seed(draft_seed, q), rag_constant);
    }

    std::vector<std::string> all_texts;
    all_texts.reserve(spec.n_queries * K);
    for (const QueryDraft& d : drafts) all_texts.insert(all_texts.end(), d.pages.begin(), d.pages.end());
    for (const std::string& t : all_texts) {
        if (segment_chars(t, spec.text.max_chars).size() != 1 || segment_tokens(t, spec.text.max_chars).size() != 1) {
            throw Error(ErrorCategory::config, "simulator: a generated page spans more than one chunk");
        }
    }

    SimOutput out;
    out.lm = std::make_shared<NGramLM>(NGramLM::train_texts(all_texts, NGramOptions{}));
    const FeatureExtractor extractor(resources, out.lm);
    std::vector<FeatureVector> features(all_texts.size());
    parallel_for(all_texts.size(), 0, [&](std::size_t i) { features[i] = extractor.featurize(all_texts[i]); });

    out.citation = calibrate(spec.citation, features, "dataset 1A");
    out.rag_citation = calibrate(spec.rag_citation, features, "dataset 2");
    std::vector<double> p1(features.size()), p2(features.size()), eta(features.size());
    for (std::size_t i = 0; i < features.size(); ++i) {
        const std::string id = web_id_of(i / K, i % K);
        p1[i] = out.citation.probability(features[i]);
        check_probability(p1[i], out.citation, "dataset 1A", id);
        p2[i] = spec.diversity ? rag_constant : out.rag_citation.probability(features[i]);
        check_probability(p2[i], out.rag_citation, "dataset 2", id);
        const auto r = features[i].regressors();
        eta[i] = std::inner_product(r.begin(), r.end(), spec.ranking.slopes.begin(), 0.0);
    }
    const double mean_eta = std::accumulate(eta.begin(), eta.end(), 0.0) / static_cast<double>(eta.size());
    for (int c = 1; c < kMaxRank; ++c) {
        const double u = static_cast<double>(c) / kMaxRank;
        out.rank_thresholds.push_back(mean_eta +
                                      (spec.ranking.link == Link::logit ? dist::logistic_quantile(u)
                                                                        : dist::normal_quantile(u)));
    }

    std::vector<Query> queries;
    std::vector<WebPage> pages;
    std::vector<ChatResponse> responses;
    Bookkeeping& book = out.bookkeeping;
    const std::uint64_t outcome_seed = derive_seed(spec.seed, kOutcomeStream);
    for (std::size_t q = 0; q < spec.n_queries; ++q) {
        Rng rng(derive_seed(outcome_seed, q));
        const QueryDraft& d = drafts[q];
        const std::string qid = query_id_of(q);
        const std::size_t base = q * K;
        queries.push_back({qid, d.query_text});

        ChatResponse response{qid, {}};
        const int n_sentences = std::min(spec.sentences_max, 1 + rng.poisson(spec.sentences_mean - 1.0));
        const std::span<const double> pq(p1.data() + base, K);
        const double total = std::accumulate(pq.begin(), pq.end(), 0.0);
        const double scale = total > 1.0 ? conditional_scale(pq) : 0.0;
        std::vector<int> times_cited(K, 0);
        std::size_t citing = 0;
        for (int j = 0; j < n_sentences; ++j) {
            ResponseSentence s{j, compose_sentence(rng, vocab, d.topic), {}};
            if (total > 1.0) {
                std::vector<int> draw(K, 0);
                for (;;) {
                    bool any = false;
                    for (std::size_t k = 0; k < K; ++k) {
                        draw[k] = rng.bernoulli(pq[k] * scale) ? 1 : 0;
                        any = any || draw[k];
                    }
                    if (any) break;
                }
                for (std::size_t k = 0; k < K; ++k) {
                    out.ledger_1a.push_back({qid, j, web_id_of(q, k), pq[k], draw[k]});
                    if (draw[k]) {
                        s.cited_web_ids.push_back(web_id_of(q, k));
                        ++times_cited[k];
                    }
                }
                book.citations_per_sentence.push_back(static_cast<double>(s.cited_web_ids.size()));
                ++citing;
            }
            response.sentences.push_back(std::move(s));
        }
        if (citing > 0) responses.push_back(std::move(response));
        book.pages_per_query.push_back(static_cast<double>(K));
        book.citing_sentences_per_query.push_back(static_cast<double>(citing));
        book.cited_pages_per_query.push_back(
            static_cast<double>(std::count_if(times_cited.begin(), times_cited.end(), [](int c) { return c > 0; })));

        for (std::size_t k = 0; k < K; ++k) {
            const std::size_t i = base + k;
            WebPage p;
            p.web_id = web_id_of(q, k);
            p.query_id = qid;
            p.url = url_of(q, k);
            p.full_text = d.pages[k];
            p.listed = times_cited[k] == 0 || !rng.bernoulli(spec.unlisted_if_cited);
            if (p.listed) {
                const double noise = spec.ranking.link == Link::logit ? rng.logistic() : rng.normal();
                const double latent = eta[i] + noise;
                const int rank = 1 + static_cast<int>(std::count_if(out.rank_thresholds.begin(),
                                                                     out.rank_thresholds.end(),
                                                                     [&](double t) { return latent > t; }));
                p.rank = rank;
                p.excerpt = word_window(rng, p.full_text, 5, 9);
                out.ranks.push_back({qid, p.web_id, eta[i], rank});
            }
            const int cited2 = spec.diversity ? d.rag_cited[k] : (rng.bernoulli(p2[i]) ? 1 : 0);
            out.ledger_2.push_back({qid, std::nullopt, p.web_id, p2[i], cited2});
            out.rag_citations[{qid, p.web_id}] = cited2;
            out.page_features[p.web_id] = features[i];
            book.citing_sentences_per_page.push_back(static_cast<double>(times_cited[k]));
            pages.push_back(std::move(p));
        }
    }
    out.corpus = Corpus::build(std::move(queries), std::move(pages), std::move(responses));
    return out;
}

// ---------------------------------------------------------------------------
// Ledger files

void write_ledger(std::ostream& out, std::span<const LedgerRow> rows) {
    csv::write_row(out, {"query_id", "sentence_idx", "web_id", "true_prob", "cited"});
    for (const LedgerRow& r : rows) {
        csv::write_row(out, {r.query_id, r.sentence_idx ? std::to_string(*r.sentence_idx) : std::string(),
                             r.web_id, csv::format_double(r.true_prob), std::to_string(r.cited)});
    }
    if (!out) throw IoError("write failure on ledger");
}

std::vector<LedgerRow> read_ledger(std::istream& in) {
    csv::Reader reader(in);
    const std::vector<std::string> header = {"query_id", "sentence_idx", "web_id", "true_prob", "cited"};
    const auto first = reader.next();
    if (!first || *first != header) throw ParseError(1, "ledger header must be query_id,sentence_idx,web_id,true_prob,cited");
    std::vector<LedgerRow> rows;
    while (auto row = reader.next()) {
        const std::size_t line = reader.line();
        if (row->size() != header.size()) throw ParseError(line, "expected 5 fields");
        LedgerRow r;
        r.query_id = (*row)[0];
        if (!(*row)[1].empty()) r.sentence_idx = static_cast<int>(csv::parse_int((*row)[1], line, "sentence_idx"));
        r.web_id = (*row)[2];
        r.true_prob = csv::parse_double((*row)[3], line, "true_prob");
        r.cited = static_cast<int>(csv::parse_int((*row)[4], line, "cited"));
        rows.push_back(std::move(r));
    }
    return rows;
}

void write_rank_truth(std::ostream& out, std::span<const RankTruth> rows) {
    csv::write_row(out, {"query_id", "web_id", "index", "rank"});
    for (const RankTruth& r : rows) {
        csv::write_row(out, {r.query_id, r.web_id, csv::format_double(r.index), std::to_string(r.rank)});
    }
    if (!out) throw IoError("write failure on rank truth");
}

// ---------------------------------------------------------------------------
// Diversity planting

double expected_diversity_gap(const SimSpec& spec, double core_share, std::size_t n_queries,
                              std::shared_ptr<const FeatureResources> resources) {
    resources = resources_or_default(std::move(resources));
    const Vocabulary vocab = build_vocabulary(*resources, spec.text);
    SimSpec s = spec;
    s.diversity = DiversityPlan{core_share, spec.diversity ? spec.diversity->core_words : DiversityPlan{}.core_words};
    const double rate = s.rag_citation.base_rate ? *s.rag_citation.base_rate
                                                 : apply_link(s.rag_citation.link, s.rag_citation.intercept);
    const HashingEmbedder embedder(512);
    const std::uint64_t seed = derive_seed(spec.seed, kCalibrationStream);
    double sum = 0.0;
    std::size_t used = 0;
    for (std::size_t q = 0; q < n_queries; ++q) {
        const QueryDraft d = draft_query(s, vocab, derive_seed(seed, 2 * q), rate);
        std::vector<EmbeddingVector> cited, ranked;
        std::vector<std::size_t> order(d.pages.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(seed, 2 * q + 1));
        rng.shuffle(order);
        for (std::size_t k = 0; k < d.pages.size(); ++k) {
            if (d.rag_cited[k]) cited.push_back(embedder.embed(d.pages[k]));
        }
        if (cited.size() < 2) continue;
        for (std::size_t r = 0; r < cited.size(); ++r) ranked.push_back(embedder.embed(d.pages[order[r]]));
        sum += mean_pairwise_similarity(cited) - mean_pairwise_similarity(ranked);
        ++used;
    }
    if (used == 0) throw Error(ErrorCategory::config, "diversity calibration: no query has two cited pages");
    return sum / static_cast<double>(used);
}

// Per-query gaps are noisy (sd around 0.15), so the calibration sample is
// large enough to pin the expected gap to about 0.003.
constexpr std::size_t kCalibrationQueries = 2000;

SimSpec plant_diversity(const SimSpec& spec, double target_gap, std::shared_ptr<const FeatureResources> resources) {
    if (!(target_gap >= 0.0 && target_gap <= 0.5)) {
        throw Error(ErrorCategory::config, fmt::format("diversity gap {} outside [0, 0.5]", target_gap));
    }
    if (!spec.rag_citation.intercept_only()) {
        throw Error(ErrorCategory::config, "diversity planting needs an intercept-only dataset 2 model");
    }
    resources = resources_or_default(std::move(resources));
    SimSpec out = spec;
    const std::size_t words = spec.diversity ? spec.diversity->core_words : DiversityPlan{}.core_words;
    if (target_gap == 0.0) {
        out.diversity = DiversityPlan{0.0, words};
        return out;
    }
    auto gap = [&](double c) { return expected_diversity_gap(spec, c, kCalibrationQueries, resources); };
    const double top = gap(1.0);
    if (top < target_gap) {
        throw Error(ErrorCategory::config,
                    fmt::format("diversity gap {} is out of reach; the largest attainable is about {:.3f}", target_gap,
                                top));
    }
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 16; ++it) {
        const double mid = 0.5 * (lo + hi);
        (gap(mid) < target_gap ? lo : hi) = mid;
    }
    out.diversity = DiversityPlan{0.5 * (lo + hi), words};
    spdlog::info("diversity core share {:.4f} for target gap {}", out.diversity->core_share, target_gap);
    return out;
}

// ---------------------------------------------------------------------------
// Reference fixture

namespace {

template <typename Pred>
std::size_t random_index_where(Rng& rng, std::size_t n, Pred pred) {
    for (int tries = 0; tries < 100000; ++tries) {
        const std::size_t i = rng.below(n);
        if (pred(i)) return i;
    }
    throw NumericError("fixture: no index satisfies the constraint");
}

void adjust_to_sum(Rng& rng, std::vector<std::size_t>& v, std::size_t target, const std::vector<std::size_t>& lo,
                   const std::vector<std::size_t>& hi) {
    std::size_t sum = std::accumulate(v.begin(), v.end(), std::size_t{0});
    while (sum < target) {
        const std::size_t i = random_index_where(rng, v.size(), [&](std::size_t k) { return v[k] < hi[k]; });
        ++v[i];
        ++sum;
    }
    while (sum > target) {
        const std::size_t i = random_index_where(rng, v.size(), [&](std::size_t k) { return v[k] > lo[k]; });
        --v[i];
        --sum;
    }
}

constexpr std::size_t kChunkLen = 128;  // default chunk length of every dataset

std::string join_segments(const std::vector<std::string>& segments) {
    std::string out;
    for (const std::string& s : segments) out += (out.empty() ? "" : " ") + s;
    return out;
}

bool has_wordless_chunk(std::string_view text) {
    auto wordless = [](const std::vector<Chunk>& chunks) {
        return std::any_of(chunks.begin(), chunks.end(), [](const Chunk& c) {
            return std::none_of(c.text.begin(), c.text.end(), [](unsigned char ch) { return std::isalpha(ch); });
        });
    };
    return wordless(segment_chars(text, kChunkLen)) || wordless(segment_tokens(text, kChunkLen));
}

}  // namespace

Corpus make_reference_fixture(std::uint64_t seed, const FixtureShape& shape,
                          std::shared_ptr<const FeatureResources> resources) {
    resources = resources_or_default(std::move(resources));
    const std::size_t n = shape.queries;
    if (n == 0 || shape.pages < n * shape.min_pages || shape.pages > n * shape.max_pages ||
        shape.citing_sentences < n || shape.citing_sentences > n * shape.max_sentences || shape.listed > shape.pages) {
        throw Error(ErrorCategory::config, "fixture shape is not attainable");
    }
    TextGeneratorParams text;
    const Vocabulary vocab = build_vocabulary(*resources, text);
    Rng rng(derive_seed(seed, kFixtureStream));

    // Pages per query: start at the maximum and remove in small steps.
    std::vector<std::size_t> K(n, shape.max_pages);
    std::size_t excess = n * shape.max_pages - shape.pages;
    while (excess > 0) {
        const std::size_t i =
            random_index_where(rng, n, [&](std::size_t k) { return K[k] > shape.min_pages; });
        const std::size_t step = std::min({excess, K[i] - shape.min_pages, std::size_t{1} + rng.below(4)});
        K[i] -= step;
        excess -= step;
    }
    // Citing sentences per query.
    std::vector<std::size_t> J(n);
    const double mean_j = static_cast<double>(shape.citing_sentences) / static_cast<double>(n);
    for (auto& j : J) j = std::min<std::size_t>(shape.max_sentences, 1 + rng.poisson(mean_j - 1.0));
    adjust_to_sum(rng, J, shape.citing_sentences, std::vector<std::size_t>(n, 1),
                  std::vector<std::size_t>(n, shape.max_sentences));
    // Swap sentence counts between queries until sum J*K hits the target.
    auto pairs = [&] {
        long long s = 0;
        for (std::size_t i = 0; i < n; ++i) s += static_cast<long long>(J[i] * K[i]);
        return s;
    };
    long long S = pairs();
    const long long T = static_cast<long long>(shape.sentence_page_pairs);
    for (std::size_t it = 0; S != T; ++it) {
        if (it > 50'000'000) throw NumericError("fixture: cannot reach the sentence-page pair target");
        const std::size_t a = rng.below(n), b = rng.below(n);
        const long long delta = (static_cast<long long>(J[a]) - static_cast<long long>(J[b])) *
                                (static_cast<long long>(K[b]) - static_cast<long long>(K[a]));
        if (delta != 0 && std::llabs(S + delta - T) < std::llabs(S - T)) {
            std::swap(J[a], J[b]);
            S += delta;
        }
    }
    // Distinct cited pages per query, and how many of them are unlisted.
    std::vector<std::size_t> C(n), U(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double raw = 0.9 * static_cast<double>(J[i]) + rng.normal() * 0.8;
        const long long c = std::llround(raw);
        C[i] = static_cast<std::size_t>(std::clamp<long long>(c, 1, static_cast<long long>(std::min<std::size_t>(
                                                                       {K[i], 10, 5 * J[i]}))));
        U[i] = static_cast<std::size_t>(std::llround(0.72 * static_cast<double>(C[i])));
    }
    std::vector<std::size_t> u_hi(n);
    for (std::size_t i = 0; i < n; ++i) u_hi[i] = std::min(C[i], K[i] - 1);
    if (std::accumulate(u_hi.begin(), u_hi.end(), std::size_t{0}) < shape.pages - shape.listed) {
        throw NumericError("fixture: too few cited pages for the unlisted target");
    }
    for (std::size_t i = 0; i < n; ++i) U[i] = std::min(U[i], u_hi[i]);
    adjust_to_sum(rng, U, shape.pages - shape.listed, std::vector<std::size_t>(n, 0), u_hi);

    std::vector<Query> queries;
    std::vector<WebPage> pages;
    std::vector<ChatResponse> responses;
    for (std::size_t q = 0; q < n; ++q) {
        const std::string qid = query_id_of(q);
        const Topic topic = draw_topic(rng, vocab, text.topic_words);
        queries.push_back({qid, compose_query(rng, topic)});

        std::vector<std::vector<std::string>> segments(K[q]);
        for (auto& segs : segments) {
            const std::size_t m = 4 + rng.below(9);
            for (std::size_t s = 0; s < m; ++s) segs.push_back(compose_segment(rng, vocab, text, topic, nullptr, 0.0));
            // A tail chunk holding only the final period would have no
            // measurable features.
            while (has_wordless_chunk(join_segments(segs))) {
                segs.push_back(compose_segment(rng, vocab, text, topic, nullptr, 0.0));
            }
        }
        std::vector<std::size_t> order(K[q]);
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        const std::vector<std::size_t> cited(order.begin(), order.begin() + static_cast<long>(C[q]));
        std::vector<bool> listed(K[q], true);
        for (std::size_t c = 0; c < U[q]; ++c) listed[cited[c]] = false;

        // Every cited page goes to some sentence, every sentence gets a page,
        // then a few extra citations up to five per sentence.
        std::vector<std::set<std::size_t>> cites(J[q]);
        for (std::size_t c = 0; c < cited.size(); ++c) cites[c % J[q]].insert(cited[c]);
        for (auto& s : cites) {
            if (s.empty()) s.insert(rng.pick(cited));
            while (s.size() < std::min<std::size_t>(5, cited.size()) && rng.bernoulli(0.2)) s.insert(rng.pick(cited));
        }

        std::vector<int> ranks;
        for (std::size_t k = 0; k < K[q]; ++k) {
            if (listed[k]) ranks.push_back(static_cast<int>(ranks.size()) + 1);
        }
        rng.shuffle(ranks);
        std::size_t next_rank = 0;
        for (std::size_t k = 0; k < K[q]; ++k) {
            WebPage p;
            p.web_id = web_id_of(q, k);
            p.query_id = qid;
            p.url = url_of(q, k);
            p.full_text = join_segments(segments[k]);
            p.listed = listed[k];
            if (p.listed) {
                p.rank = ranks[next_rank++];
                const std::string& seg = rng.pick(segments[k]);
                std::string excerpt = word_window(rng, seg, 6, 12);
                if (rng.bernoulli(0.2)) excerpt += " ... " + word_window(rng, seg, 3, 6);
                p.excerpt = excerpt;
            }
            pages.push_back(std::move(p));
        }

        ChatResponse r{qid, {}};
        const std::size_t extra = rng.below(3);
        std::vector<int> is_citing(J[q], 1);
        is_citing.insert(is_citing.end(), extra, 0);
        rng.shuffle(is_citing);
        std::size_t next_citing = 0;
        for (std::size_t j = 0; j < is_citing.size(); ++j) {
            ResponseSentence s;
            s.sentence_idx = static_cast<int>(j);
            if (is_citing[j]) {
                const auto& set = cites[next_citing++];
                for (std::size_t k : set) s.cited_web_ids.push_back(web_id_of(q, k));
                const std::size_t src = *std::next(set.begin(), static_cast<long>(rng.below(set.size())));
                s.text = word_window(rng, rng.pick(segments[src]), 6, 12);
                capitalize(s.text);
                s.text += '.';
            } else {
                s.text = compose_sentence(rng, vocab, topic);
            }
            r.sentences.push_back(std::move(s));
        }
        responses.push_back(std::move(r));
    }
    return Corpus::build(std::move(queries), std::move(pages), std::move(responses));
}

}  // namespace citecrit::sim
