#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "citecrit/corpus.hpp"
#include "citecrit/econometrics.hpp"
#include "citecrit/language_model.hpp"
#include "citecrit/pipelines.hpp"
#include "citecrit/textfeatures.hpp"

namespace citecrit::sim {

/// Portable random source: std::mt19937_64 (whose output sequence the C++
/// standard fixes) with distributions implemented here, because the
/// standard library's distributions differ between implementations.
///   uniform()      53 high bits / 2^53, in [0, 1)
///   below(n)       rejection sampling on the top bits, unbiased
///   normal()       Box-Muller, both values of a pair are used
///   logistic()     log(u / (1 - u)) with u in (0, 1)
///   poisson(mean)  multiplication method (means below ~30)
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next();
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t below(std::uint64_t n);
    bool bernoulli(double p) { return uniform() < p; }
    double normal();
    double logistic();
    int poisson(double mean);

    template <typename T>
    const T& pick(const std::vector<T>& items) {
        return items[below(items.size())];
    }
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[below(i)]);
    }

private:
    std::mt19937_64 engine_;
    std::optional<double> spare_normal_;
};

/// SplitMix64 finalizer; derives independent sub-seeds from (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Scale r for citation draws within one sentence: the positive root of
/// r = 1 - prod(1 - p_k r), which exists when sum(p) > 1. Independent
/// Bernoulli(p_k r) draws conditioned on at least one success then have
/// marginals exactly p_k.
double conditional_scale(std::span<const double> p);

enum class OutcomeLink { linear, logit, probit };
std::string_view link_name(OutcomeLink link);
OutcomeLink parse_link(std::string_view name);

/// Binary outcome model over the seven features.
struct PlantedModel {
    std::array<double, 7> slopes{};
    double intercept = 0.0;
    /// When set, the intercept is recalibrated so that the mean planted
    /// probability over all generated pages equals this rate.
    std::optional<double> base_rate;
    OutcomeLink link = OutcomeLink::linear;

    bool intercept_only() const;
    double index(const FeatureVector& x) const;
    double probability(const FeatureVector& x) const;
};

/// Latent index slopes·x plus logistic or normal noise, cut into ranks 1..20
/// at thresholds mean(index) + F^-1(c / 20).
struct RankingModel {
    std::array<double, 7> slopes{};
    Link link = Link::logit;
};

/// Drivers of the measured features. Every page is a single segment that
/// fits one 128-character chunk, so all three datasets see the same text.
struct TextGeneratorParams {
    std::size_t min_words = 14;
    std::size_t max_words = 18;
    std::size_t max_chars = 128;
    /// Share of pages whose hard-word share is drawn from
    /// [hard_share_min, hard_share_max]; the rest use [0, easy_share_max].
    /// Every word class has easy and hard variants, so the share carries
    /// over to the whole page.
    double hard_page_rate = 0.5;
    double easy_share_max = 0.02;
    double hard_share_min = 0.95;
    double hard_share_max = 1.0;
    /// Signed share of function words, min + (max - min) * u^analytic_power
    /// for uniform u: positive values add articles and prepositions, negative
    /// values add pronouns and auxiliaries. Powers above one skew the draws
    /// toward the minimum, which keeps linear planted probabilities away
    /// from zero.
    double analytic_min = -0.3;
    double analytic_max = 0.5;
    double analytic_power = 2.0;
    std::vector<double> certitude_weights = {0.5, 0.5};  // P(0 hits), P(1 hit), ...
    std::vector<double> conversation_weights = {0.4, 0.6};
    std::vector<double> sentiment_weights = {0.05, 0.45, 0.3, 0.2};
    double sentiment_consistency = 0.95;  // chance a hit shares the page's sign
    /// Share of content words placed inside stock phrases the language
    /// model learns, drawn like the analytic share.
    double predictable_min = 0.0;
    double predictable_max = 0.6;
    double predictable_power = 3.0;
    std::size_t stock_phrase_words = 4;
    std::size_t stock_phrases = 24;
    double topic_share = 0.35;
    std::size_t topic_words = 8;
};

/// Cited pages of the retrieval-augmented dataset draw content words from a
/// per-query core vocabulary with probability `core_share`.
struct DiversityPlan {
    double core_share = 0.0;
    std::size_t core_words = 8;
};

struct SimSpec {
    std::uint64_t seed = 1;
    std::size_t n_queries = 100;
    std::size_t pages_per_query = 20;
    /// Sentences per response: 1 + Poisson(sentences_mean - 1), capped.
    double sentences_mean = 3.69;
    int sentences_max = 14;
    PlantedModel citation;      // dataset 1A
    RankingModel ranking;       // dataset 1B
    PlantedModel rag_citation;  // dataset 2
    double unlisted_if_cited = 0.7;
    TextGeneratorParams text;
    std::optional<DiversityPlan> diversity;
};

/// Named starting points. "null" has zero slopes everywhere;
/// "chat_citation", "ranking" and "rag_citation" plant the reference
/// coefficients on the matching dataset and keep the other two
/// intercept-only.
SimSpec preset(std::string_view name);
std::vector<std::string> preset_names();

/// Reads a spec object (the `simulate` section of a run config). Keys left
/// out keep the defaults of `base`. Unknown keys are a config error. A
/// `diversity_gap` number is only checked here; callers apply it with
/// plant_diversity.
SimSpec spec_from_json(const nlohmann::json& j, SimSpec base = {});
nlohmann::ordered_json spec_to_json(const SimSpec& spec);

struct LedgerRow {
    std::string query_id;
    std::optional<int> sentence_idx;  // unset for dataset 2
    std::string web_id;
    double true_prob = 0.0;
    int cited = 0;
};

struct RankTruth {
    std::string query_id;
    std::string web_id;
    double index = 0.0;
    int rank = 0;
};

/// Counts recorded while generating, for comparison with corpus_summary.
struct Bookkeeping {
    std::vector<double> pages_per_query;
    std::vector<double> citing_sentences_per_query;
    std::vector<double> cited_pages_per_query;
    std::vector<double> citations_per_sentence;
    std::vector<double> citing_sentences_per_page;
};

struct SimOutput {
    Corpus corpus;
    std::vector<LedgerRow> ledger_1a;
    std::vector<LedgerRow> ledger_2;
    std::vector<RankTruth> ranks;
    CitationMap rag_citations;
    /// Models with calibrated intercepts, as used for the draws.
    PlantedModel citation;
    PlantedModel rag_citation;
    std::vector<double> rank_thresholds;
    std::shared_ptr<NGramLM> lm;
    std::map<std::string, FeatureVector> page_features;
    Bookkeeping bookkeeping;
};

/// Deterministic per spec. Throws a config error when a linear model leaves
/// (0, 1) on some page, when a base rate cannot be met, or when diversity
/// planting is asked for with a non-constant dataset 2 model.
SimOutput generate(const SimSpec& spec, std::shared_ptr<const FeatureResources> resources = nullptr);

/// CSV `query_id,sentence_idx,web_id,true_prob,cited`.
void write_ledger(std::ostream& out, std::span<const LedgerRow> rows);
std::vector<LedgerRow> read_ledger(std::istream& in);
/// CSV `query_id,web_id,index,rank`.
void write_rank_truth(std::ostream& out, std::span<const RankTruth> rows);

/// Mean of sim_cited - sim_top_ranked over queries with two or more cited
/// pages, from text-only generation with uniformly random rankings.
double expected_diversity_gap(const SimSpec& spec, double core_share, std::size_t n_queries = 2000,
                              std::shared_ptr<const FeatureResources> resources = nullptr);

/// Returns `spec` with a diversity plan whose expected gap matches
/// `target_gap` in [0, 0.5]. The dataset 2 model must be intercept-only.
/// Throws a config error when the gap is out of reach.
SimSpec plant_diversity(const SimSpec& spec, double target_gap,
                        std::shared_ptr<const FeatureResources> resources = nullptr);

/// Structural targets of the reference capture.
struct FixtureShape {
    std::size_t queries = 700;
    std::size_t pages = 13428;
    std::size_t listed = 11741;
    std::size_t citing_sentences = 2586;
    std::size_t sentence_page_pairs = 49917;  // sum over queries of citing sentences x pages
    std::size_t min_pages = 12;
    std::size_t max_pages = 20;
    std::size_t max_sentences = 14;
};

/// Capture with exactly the counts of `shape`: multi-chunk pages of roughly
/// 400 to 1500 characters, excerpts on listed pages, contiguous ranks, and
/// every unlisted page cited.
Corpus make_reference_fixture(std::uint64_t seed = 17, const FixtureShape& shape = {},
                          std::shared_ptr<const FeatureResources> resources = nullptr);

}  // namespace citecrit::sim
