#include <doctest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "citecrit/error.hpp"
#include "citecrit/pipelines.hpp"
#include "citecrit/simulator.hpp"
#include "citecrit/summary.hpp"

using namespace citecrit;

namespace {

std::shared_ptr<const FeatureResources> resources() {
    static const auto res = std::make_shared<const FeatureResources>(FeatureResources::load());
    return res;
}

sim::SimSpec small(std::string_view preset, std::size_t n_queries, std::uint64_t seed = 7) {
    sim::SimSpec s = sim::preset(preset);
    s.n_queries = n_queries;
    s.seed = seed;
    return s;
}

std::string corpus_bytes(const Corpus& c) {
    std::ostringstream out;
    save_corpus(c, out);
    return out.str();
}

std::string ledger_bytes(std::span<const sim::LedgerRow> rows) {
    std::ostringstream out;
    sim::write_ledger(out, rows);
    return out.str();
}

ErrorCategory category_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.category();
    }
    FAIL("expected an error");
    return ErrorCategory::usage;
}

}  // namespace

TEST_CASE("mt19937_64 stream matches the value fixed by the C++ standard") {
    // The standard requires the 10000th output of a default-seeded engine to be this value.
    sim::Rng rng(5489u);
    std::uint64_t v = 0;
    for (int i = 0; i < 10000; ++i) v = rng.next();
    CHECK(v == 9981545732273789042ull);
}

TEST_CASE("rng draws stay in range and derived seeds differ by stream") {
    sim::Rng rng(11);
    for (int i = 0; i < 10000; ++i) {
        const double u = rng.uniform();
        CHECK((u >= 0.0 && u < 1.0));
        CHECK(rng.below(7) < 7u);
    }
    CHECK(sim::derive_seed(1, 1) != sim::derive_seed(1, 2));
    CHECK(sim::derive_seed(1, 1) != sim::derive_seed(2, 1));
    CHECK(sim::derive_seed(3, 4) == sim::derive_seed(3, 4));
}

TEST_CASE("conditional citation draw has the planted marginals") {
    // Enumerate all 2^K outcomes of independent Bernoulli(p_k r) draws and
    // condition on at least one success.
    const std::vector<std::vector<double>> cases = {
        {0.3, 0.5, 0.4}, {0.9, 0.2}, {0.07, 0.07, 0.07, 0.07, 0.07, 0.07, 0.07, 0.07, 0.07, 0.07, 0.07, 0.07, 0.07,
                                       0.07, 0.07, 0.07, 0.07},
        {0.25, 0.05, 0.6, 0.11, 0.02, 0.1}};
    for (const auto& p : cases) {
        const double r = sim::conditional_scale(p);
        REQUIRE(r > 0.0);
        REQUIRE(r <= 1.0);
        const std::size_t K = p.size();
        std::vector<double> marginal(K, 0.0);
        double any = 0.0;
        for (std::uint64_t mask = 1; mask < (1ull << K); ++mask) {
            double prob = 1.0;
            for (std::size_t k = 0; k < K; ++k) prob *= (mask >> k & 1) ? p[k] * r : 1.0 - p[k] * r;
            any += prob;
            for (std::size_t k = 0; k < K; ++k) {
                if (mask >> k & 1) marginal[k] += prob;
            }
        }
        for (std::size_t k = 0; k < K; ++k) CHECK(marginal[k] / any == doctest::Approx(p[k]).epsilon(1e-10));
    }
}

TEST_CASE("same spec gives byte-identical corpora and ledgers") {
    const auto spec = small("chat_citation", 25);
    const auto a = sim::generate(spec, resources());
    const auto b = sim::generate(spec, resources());
    CHECK(corpus_bytes(a.corpus) == corpus_bytes(b.corpus));
    CHECK(ledger_bytes(a.ledger_1a) == ledger_bytes(b.ledger_1a));
    CHECK(ledger_bytes(a.ledger_2) == ledger_bytes(b.ledger_2));

    auto other = spec;
    other.seed = spec.seed + 1;
    CHECK(corpus_bytes(sim::generate(other, resources()).corpus) != corpus_bytes(a.corpus));
}

TEST_CASE("intercept-only models hit their base rates") {
    const auto out = sim::generate(small("null", 700, 3), resources());
    REQUIRE(out.ledger_1a.size() >= 45000);
    const auto rate = [](const std::vector<sim::LedgerRow>& rows) {
        double s = 0.0;
        for (const auto& r : rows) s += r.cited;
        return s / static_cast<double>(rows.size());
    };
    CHECK(rate(out.ledger_1a) == doctest::Approx(0.07).epsilon(0.01 / 0.07));
    CHECK(rate(out.ledger_2) == doctest::Approx(0.19).epsilon(0.01 / 0.19));
    for (const auto& r : out.ledger_1a) CHECK(r.true_prob == doctest::Approx(0.07).epsilon(1e-12));
}

TEST_CASE("planted link on pipeline features reproduces the ledger exactly") {
    const auto out = sim::generate(small("chat_citation", 40), resources());
    HashingEmbedder embedder;
    const FeatureExtractor extractor(resources(), train_corpus_lm(out.corpus));
    const PipelineContext ctx{embedder, extractor, {}};

    const auto d1 = build_dataset_1a(out.corpus, ctx);
    REQUIRE(d1.rows.size() == out.ledger_1a.size());
    std::map<std::tuple<std::string, int, std::string>, const sim::LedgerRow*> by_key;
    for (const auto& r : out.ledger_1a) by_key[{r.query_id, *r.sentence_idx, r.web_id}] = &r;
    for (const auto& row : d1.rows) {
        const auto* truth = by_key.at({row.query_id, row.sentence_idx, row.web_id});
        CHECK(out.citation.probability(row.features) == truth->true_prob);
        CHECK(row.cited == truth->cited);
    }

    auto d2 = build_dataset_2(out.corpus, ctx);
    REQUIRE(apply_citations(d2.rows, out.rag_citations) == 0);
    REQUIRE(d2.rows.size() == out.ledger_2.size());
    std::map<std::string, const sim::LedgerRow*> by_page;
    for (const auto& r : out.ledger_2) by_page[r.web_id] = &r;
    for (const auto& row : d2.rows) {
        CHECK(out.rag_citation.probability(row.features) == by_page.at(row.web_id)->true_prob);
        CHECK(*row.cited == by_page.at(row.web_id)->cited);
    }

    const auto d1b = build_dataset_1b(out.corpus, ctx);
    REQUIRE(d1b.rows.size() == out.ranks.size());
    std::map<std::string, int> rank_of;
    for (const auto& r : out.ranks) rank_of[r.web_id] = r.rank;
    for (const auto& row : d1b.rows) CHECK(row.rank == rank_of.at(row.web_id));
}

TEST_CASE("generator bookkeeping agrees with the corpus summary") {
    const auto out = sim::generate(small("rag_citation", 60), resources());
    const SummaryTable table = corpus_summary(out.corpus);
    const std::vector<const std::vector<double>*> recorded = {
        &out.bookkeeping.pages_per_query, &out.bookkeeping.citing_sentences_per_query,
        &out.bookkeeping.cited_pages_per_query, &out.bookkeeping.citations_per_sentence,
        &out.bookkeeping.citing_sentences_per_page};
    REQUIRE(table.size() == recorded.size());
    for (std::size_t i = 0; i < table.size(); ++i) {
        const SummaryRow expected = summarize(table[i].statistic, *recorded[i]);
        CAPTURE(table[i].statistic);
        CHECK(table[i].n == expected.n);
        CHECK(table[i].mean == doctest::Approx(expected.mean).epsilon(1e-12));
        CHECK(table[i].max == expected.max);
    }
}

TEST_CASE("simulated pages are single chunks with realistic feature spread") {
    const auto out = sim::generate(small("null", 80), resources());
    std::vector<double> readability, perplexity;
    for (const auto& page : out.corpus.pages()) {
        CHECK(segment_chars(page.full_text, 128).size() == 1);
        const auto& x = out.page_features.at(page.web_id);
        readability.push_back(x.readability);
        perplexity.push_back(x.perplexity);
    }
    CHECK(summarize("r", readability).sd > 5.0);
    CHECK(summarize("p", perplexity).sd > 0.1);
}

TEST_CASE("unlisted pages are always cited in dataset 1A") {
    const auto out = sim::generate(small("chat_citation", 50), resources());
    std::set<std::string> cited;
    for (const auto& r : out.ledger_1a) {
        if (r.cited) cited.insert(r.web_id);
    }
    for (const auto& p : out.corpus.pages()) {
        if (!p.listed) CHECK(cited.count(p.web_id) == 1);
        if (p.listed) CHECK((*p.rank >= 1 && *p.rank <= 20));
    }
}

TEST_CASE("spec JSON round-trips and rejects unknown keys") {
    for (const auto& name : sim::preset_names()) {
        const auto spec = sim::preset(name);
        const auto j = sim::spec_to_json(spec);
        const auto back = sim::spec_from_json(nlohmann::json::parse(j.dump()));
        CHECK(sim::spec_to_json(back).dump() == j.dump());
    }
    const auto j = nlohmann::json::parse(R"({"seed": 4, "n_queries": 12, "citation": {"betas": {"perplexity": -0.03}}})");
    const auto s = sim::spec_from_json(j);
    CHECK(s.seed == 4u);
    CHECK(s.n_queries == 12u);
    CHECK(s.citation.slopes[6] == -0.03);

    CHECK(category_of([] { sim::spec_from_json(nlohmann::json::parse(R"({"n_querys": 3})")); }) ==
          ErrorCategory::config);
    CHECK(category_of([] {
              sim::spec_from_json(nlohmann::json::parse(R"({"citation": {"betas": {"fluency": 1}}})"));
          }) == ErrorCategory::config);
    CHECK(category_of([] { sim::preset("table4"); }) == ErrorCategory::config);
}

TEST_CASE("linear model leaving the unit interval is a config error") {
    auto spec = small("null", 10);
    spec.citation.slopes[6] = -2.0;  // perplexity
    const auto category = category_of([&] { sim::generate(spec, resources()); });
    CHECK(category == ErrorCategory::config);
}

TEST_CASE("ledger CSV round-trips") {
    const auto out = sim::generate(small("null", 5), resources());
    std::stringstream io;
    sim::write_ledger(io, out.ledger_1a);
    const auto back = sim::read_ledger(io);
    REQUIRE(back.size() == out.ledger_1a.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].web_id == out.ledger_1a[i].web_id);
        CHECK(back[i].sentence_idx == out.ledger_1a[i].sentence_idx);
        CHECK(back[i].true_prob == out.ledger_1a[i].true_prob);
        CHECK(back[i].cited == out.ledger_1a[i].cited);
    }
}

TEST_CASE("diversity planting edge cases") {
    const auto spec = small("null", 20);
    CHECK(sim::plant_diversity(spec, 0.0, resources()).diversity->core_share == 0.0);
    CHECK(category_of([&] { sim::plant_diversity(spec, 0.5, resources()); }) == ErrorCategory::config);
    CHECK(category_of([&] { sim::plant_diversity(spec, -0.1, resources()); }) == ErrorCategory::config);
    CHECK(category_of([&] { sim::plant_diversity(sim::preset("rag_citation"), 0.03, resources()); }) ==
          ErrorCategory::config);
}

TEST_CASE("reduced fixture shape is met exactly") {
    sim::FixtureShape shape;
    shape.queries = 40;
    shape.pages = 730;
    shape.listed = 640;
    shape.citing_sentences = 150;
    shape.sentence_page_pairs = 2790;
    const Corpus c = sim::make_reference_fixture(5, shape, resources());

    HashingEmbedder embedder;
    const FeatureExtractor extractor(resources(), train_corpus_lm(c));
    const PipelineContext ctx{embedder, extractor, {}};
    CHECK(build_dataset_1a(c, ctx).rows.size() == shape.sentence_page_pairs);
    CHECK(build_dataset_1b(c, ctx).rows.size() == shape.listed);
    CHECK(build_dataset_2(c, ctx).rows.size() == shape.pages);

    const SummaryTable t = corpus_summary(c);
    REQUIRE(t.size() == 5);
    CHECK(t[0].n == shape.queries);
    CHECK(t[1].n == shape.queries);
    CHECK(t[2].n == shape.queries);
    CHECK(t[3].n == shape.citing_sentences);
    CHECK(t[4].n == shape.pages);
    CHECK(t[3].max <= 5.0);
    CHECK(t[0].max <= 20.0);
}

TEST_CASE("unattainable fixture shape is a config error") {
    sim::FixtureShape shape;
    shape.queries = 10;
    shape.pages = 500;
    CHECK(category_of([&] { sim::make_reference_fixture(1, shape, resources()); }) == ErrorCategory::config);
}
