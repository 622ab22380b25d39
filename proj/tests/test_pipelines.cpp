#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "citecrit/error.hpp"
#include "citecrit/pipelines.hpp"
#include "oracles.hpp"

using namespace citecrit;

namespace {

WebPage make_page(const std::string& qid, const std::string& wid, std::string text, std::optional<int> rank,
                  std::optional<std::string> excerpt = std::nullopt) {
    WebPage p;
    p.query_id = qid;
    p.web_id = wid;
    p.url = "https://example.org/" + wid;
    p.full_text = std::move(text);
    p.rank = rank;
    p.listed = rank.has_value();
    p.excerpt = std::move(excerpt);
    return p;
}

ResponseSentence sentence(int idx, std::string text, std::vector<std::string> cited) {
    return {idx, std::move(text), std::move(cited)};
}

// Random multi-chunk corpus. Every listed page gets an excerpt cut from its
// own text; unlisted pages are cited by the first sentence.
Corpus random_corpus(std::uint64_t seed, int n_queries, int pages_per_query) {
    std::mt19937_64 rng(seed);
    std::vector<Query> queries;
    std::vector<WebPage> pages;
    std::vector<ChatResponse> responses;
    for (int q = 0; q < n_queries; ++q) {
        const std::string qid = fmt::format("q{:03d}", q);
        queries.push_back({qid, oracle::random_words(rng, 4)});
        std::vector<std::string> unlisted;
        for (int k = 0; k < pages_per_query; ++k) {
            const std::string wid = fmt::format("{}-w{:02d}", qid, k);
            std::string text;
            for (int s = 0; s < 8; ++s) text += oracle::random_words(rng, 6);
            const bool listed = k < pages_per_query - 1;
            std::optional<std::string> excerpt;
            if (listed) excerpt = text.substr(std::uniform_int_distribution<std::size_t>(0, 150)(rng), 40);
            if (!listed) unlisted.push_back(wid);
            pages.push_back(make_page(qid, wid, text, listed ? std::optional<int>(k + 1) : std::nullopt, excerpt));
        }
        ChatResponse r;
        r.query_id = qid;
        std::vector<std::string> first = unlisted;
        first.push_back(fmt::format("{}-w00", qid));
        r.sentences.push_back(sentence(0, oracle::random_words(rng, 8), first));
        r.sentences.push_back(sentence(1, oracle::random_words(rng, 5), {}));
        r.sentences.push_back(sentence(2, oracle::random_words(rng, 7), {fmt::format("{}-w01", qid)}));
        responses.push_back(std::move(r));
    }
    return Corpus::build(std::move(queries), std::move(pages), std::move(responses));
}

struct Fixture {
    explicit Fixture(const Corpus& corpus, std::size_t workers = 1)
        : lm(train_corpus_lm(corpus)),
          extractor(std::make_shared<const FeatureResources>(FeatureResources::load()), lm),
          ctx{embedder, extractor, PipelineConfig{128, 128, workers}} {}

    HashingEmbedder embedder{512};
    std::shared_ptr<NGramLM> lm;
    FeatureExtractor extractor;
    PipelineContext ctx;
};

template <typename Rows>
std::string csv_of(const Rows& rows) {
    std::ostringstream out;
    write_dataset(out, std::span(rows));
    return out.str();
}

}  // namespace

TEST_CASE("dataset 1A has one row per citing sentence and page") {
    const Corpus corpus = Corpus::build(
        {{"q1", "why do people wear ties"}},
        {make_page("q1", "a", "Ties began as Croatian scarves worn by soldiers.", 1, "Croatian scarves"),
         make_page("q1", "b", "Silk is the usual fabric for a modern tie.", 2, "usual fabric"),
         make_page("q1", "c", "Office dress codes keep the tie alive.", std::nullopt)},
        {{"q1",
          {sentence(0, "Ties come from Croatian soldiers.", {"a"}), sentence(1, "No citation here.", {}),
           sentence(2, "Offices still expect them.", {"b", "c"})}}});
    Fixture fx(corpus);
    const auto ds = build_dataset_1a(corpus, fx.ctx);
    REQUIRE(ds.rows.size() == 6);
    std::vector<std::tuple<int, std::string, int>> got;
    for (const auto& r : ds.rows) got.emplace_back(r.sentence_idx, r.web_id, r.cited);
    const std::vector<std::tuple<int, std::string, int>> want = {{0, "a", 1}, {0, "b", 0}, {0, "c", 0},
                                                                 {2, "a", 0}, {2, "b", 1}, {2, "c", 1}};
    CHECK(got == want);
    CHECK(ds.report.pages_captured == 3);
    CHECK(ds.report.pages_skipped == 0);
}

TEST_CASE("dataset 1A chunk choice equals an exhaustive rescan") {
    const Corpus corpus = random_corpus(11, 4, 5);
    Fixture fx(corpus);
    const auto ds = build_dataset_1a(corpus, fx.ctx);
    std::size_t expected_rows = 0;
    for (const Query& q : corpus.queries()) {
        std::size_t citing = 0;
        for (const auto& s : corpus.response(q.query_id)->sentences) citing += s.cited_web_ids.empty() ? 0 : 1;
        expected_rows += citing * corpus.pages_for(q.query_id).size();
    }
    REQUIRE(ds.rows.size() == expected_rows);
    for (const auto& row : ds.rows) {
        const WebPage& page = corpus.page(row.web_id);
        const auto chunks = segment_chars(page.full_text, 128);
        const EmbeddingVector focal = fx.embedder.embed(row.focal);
        int best = 0;
        double best_score = -2.0;
        for (std::size_t m = 0; m < chunks.size(); ++m) {
            const double s = oracle::cosine_long_double(fx.embedder.embed(chunks[m].text), focal);
            if (s > best_score + 1e-12) {
                best_score = s;
                best = static_cast<int>(m);
            }
        }
        CHECK(row.chunk_idx == best);
        CHECK(row.score == doctest::Approx(best_score).epsilon(1e-12));
        CHECK(row.features == fx.extractor.featurize(chunks[static_cast<std::size_t>(best)].text));
    }
}

TEST_CASE("dataset 1B matches excerpts by LCS") {
    const Corpus corpus = random_corpus(12, 3, 6);
    Fixture fx(corpus);
    const auto ds = build_dataset_1b(corpus, fx.ctx);
    std::size_t listed = 0;
    for (const WebPage& p : corpus.pages()) listed += p.listed ? 1 : 0;
    REQUIRE(ds.rows.size() == listed);
    for (const auto& row : ds.rows) {
        const WebPage& page = corpus.page(row.web_id);
        CHECK(row.rank == *page.rank);
        const auto chunks = segment_chars(page.full_text, 128);
        std::size_t best = 0, best_len = 0;
        for (std::size_t m = 0; m < chunks.size(); ++m) {
            const std::size_t len = oracle::dp_lcs_folded(chunks[m].text, *page.excerpt);
            if (len > best_len || m == 0) {
                best_len = len;
                best = m;
            }
        }
        CHECK(row.chunk_idx == static_cast<int>(best));
        CHECK(row.score == static_cast<double>(best_len));
    }
}

TEST_CASE("dataset 1B requires excerpts on listed pages") {
    const Corpus corpus = Corpus::build({{"q1", "ties"}},
                                        {make_page("q1", "a", "Some text about ties.", 1, "ties"),
                                         make_page("q1", "b", "Other text about silk.", 2)},
                                        {});
    Fixture fx(corpus);
    CHECK_THROWS_WITH_AS(build_dataset_1b(corpus, fx.ctx), doctest::Contains("b"), ValidationError);
}

TEST_CASE("dataset 2 uses LCS for listed pages and merged sentences otherwise") {
    const Corpus corpus = random_corpus(13, 3, 5);
    Fixture fx(corpus);
    const auto ds = build_dataset_2(corpus, fx.ctx);
    REQUIRE(ds.rows.size() == corpus.pages().size());
    for (const auto& row : ds.rows) {
        const WebPage& page = corpus.page(row.web_id);
        CHECK((row.method == SelectionMethod::lcs_match) == page.listed);
        CHECK_FALSE(row.cited.has_value());
        const auto chunks = segment_tokens(page.full_text, 128);
        CHECK(row.chunk_text == chunks[static_cast<std::size_t>(row.chunk_idx)].text);
        if (!page.listed) {
            const auto* resp = corpus.response(row.query_id);
            std::vector<std::string> citing;
            for (const auto& s : resp->sentences) {
                if (std::count(s.cited_web_ids.begin(), s.cited_web_ids.end(), row.web_id)) citing.push_back(s.text);
            }
            CHECK(row.focal == merge_focal_sentences(citing));
        }
    }
}

TEST_CASE("dataset 2 on an all-listed corpus has no similarity rows") {
    const Corpus corpus = Corpus::build({{"q1", "ties"}},
                                        {make_page("q1", "a", "Some text about ties.", 1, "ties"),
                                         make_page("q1", "b", "Other text about silk.", 2, "silk")},
                                        {{"q1", {sentence(0, "Ties.", {"a"})}}});
    Fixture fx(corpus);
    const auto ds = build_dataset_2(corpus, fx.ctx);
    REQUIRE(ds.rows.size() == 2);
    for (const auto& r : ds.rows) CHECK(r.method == SelectionMethod::lcs_match);
}

TEST_CASE("dataset 2 rejects an unlisted page nobody cites") {
    const Corpus corpus = Corpus::build({{"q1", "ties"}},
                                        {make_page("q1", "a", "Some text about ties.", 1, "ties"),
                                         make_page("q1", "orphan", "Other text about silk.", std::nullopt)},
                                        {{"q1", {sentence(0, "Ties.", {"a"})}}});
    Fixture fx(corpus);
    CHECK_THROWS_WITH_AS(build_dataset_2(corpus, fx.ctx), doctest::Contains("orphan"), ValidationError);
}

TEST_CASE("pages with empty text are skipped and reported") {
    const Corpus corpus = Corpus::build({{"q1", "ties"}},
                                        {make_page("q1", "a", "Some text about ties.", 1, "ties"),
                                         make_page("q1", "blank", "   ", 2, "x")},
                                        {{"q1", {sentence(0, "Ties.", {"a"})}}});
    Fixture fx(corpus);
    const auto ds = build_dataset_1a(corpus, fx.ctx);
    CHECK(ds.rows.size() == 1);
    CHECK(ds.report.pages_skipped == 1);
    CHECK(ds.report.skipped_web_ids == std::vector<std::string>{"blank"});
}

TEST_CASE("builds are byte-identical across runs and worker counts") {
    const Corpus corpus = random_corpus(14, 6, 4);
    Fixture serial(corpus, 1), parallel(corpus, 3);
    CHECK(csv_of(build_dataset_1a(corpus, serial.ctx).rows) == csv_of(build_dataset_1a(corpus, parallel.ctx).rows));
    CHECK(csv_of(build_dataset_1b(corpus, serial.ctx).rows) == csv_of(build_dataset_1b(corpus, parallel.ctx).rows));
    CHECK(csv_of(build_dataset_2(corpus, serial.ctx).rows) == csv_of(build_dataset_2(corpus, parallel.ctx).rows));
    CHECK(csv_of(build_dataset_1a(corpus, serial.ctx).rows) == csv_of(build_dataset_1a(corpus, serial.ctx).rows));
}

TEST_CASE("parallel_for rethrows the lowest failing index") {
    std::vector<int> hit(50, 0);
    CHECK_THROWS_WITH(parallel_for(50, 4,
                                   [&](std::size_t i) {
                                       hit[i] = 1;
                                       if (i == 17 || i == 31) throw ValidationError("fail " + std::to_string(i));
                                   }),
                      "fail 17");
    CHECK(std::count(hit.begin(), hit.end(), 1) == 50);
}

TEST_CASE("dataset CSVs round-trip") {
    const Corpus corpus = random_corpus(15, 2, 4);
    Fixture fx(corpus);
    const auto a = build_dataset_1a(corpus, fx.ctx).rows;
    std::istringstream ia(csv_of(a));
    CHECK(csv_of(read_dataset_1a(ia)) == csv_of(a));
    const auto b = build_dataset_1b(corpus, fx.ctx).rows;
    std::istringstream ib(csv_of(b));
    CHECK(csv_of(read_dataset_1b(ib)) == csv_of(b));
    auto c = build_dataset_2(corpus, fx.ctx).rows;
    c[0].cited = 1;
    std::istringstream ic(csv_of(c));
    const auto c2 = read_dataset_2(ic);
    CHECK(csv_of(c2) == csv_of(c));
    CHECK(c2[0].cited == 1);
    CHECK_FALSE(c2[1].cited.has_value());

    std::istringstream bad("query_id,web_id,rank\n");
    CHECK_THROWS_AS(read_dataset_1b(bad), ParseError);
}

TEST_CASE("citation files load and apply") {
    std::istringstream in("query_id,web_id,cited\nq1,a,1\nq1,b,0\n");
    const CitationMap m = load_citations(in);
    CHECK(m.size() == 2);
    std::vector<Dataset2Row> rows(3);
    rows[0].query_id = rows[1].query_id = rows[2].query_id = "q1";
    rows[0].web_id = "a";
    rows[1].web_id = "b";
    rows[2].web_id = "c";
    CHECK(apply_citations(rows, m) == 1);
    CHECK(rows[0].cited == 1);
    CHECK(rows[1].cited == 0);
    std::ostringstream out;
    write_citations(out, m);
    CHECK(out.str() == "query_id,web_id,cited\nq1,a,1\nq1,b,0\n");
    std::istringstream bad("query_id,web_id,cited\nq1,a,2\n");
    CHECK_THROWS_AS(load_citations(bad), ParseError);
    std::istringstream dup("query_id,web_id,cited\nq1,a,1\nq1,a,0\n");
    CHECK_THROWS_AS(load_citations(dup), ParseError);
}

namespace {

std::vector<FeatureVector> random_features(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<FeatureVector> out(n);
    for (auto& f : out) {
        f.readability = -20 + 8 * z(rng);
        f.analytic = 60 + 15 * z(rng);
        f.certitude = std::fabs(z(rng));
        f.subjectivity = 0.4 + 0.1 * z(rng);
        f.polarity = 0.15 + 0.05 * z(rng);
        f.conversation = std::fabs(z(rng));
        f.perplexity = 4.5 + 0.4 * z(rng);
    }
    return out;
}

}  // namespace

TEST_CASE("citation analysis fits all three families") {
    std::mt19937_64 rng(3);
    const auto x = random_features(rng, 3000);
    std::vector<double> y;
    std::bernoulli_distribution coin(0.3);
    for (std::size_t i = 0; i < x.size(); ++i) y.push_back(coin(rng) ? 1.0 : 0.0);
    const CitationAnalysis a = run_citation_analysis(x, y);
    REQUIRE(a.ols);
    REQUIRE(a.logit);
    REQUIRE(a.probit);
    CHECK(a.errors.empty());
    CHECK(a.ols->terms.back() == "Constant");
    const std::string table = render_citation_analysis(a, "Citation");
    CHECK(table.find("Logistic") != std::string::npos);
    CHECK(table.find("Observations") != std::string::npos);
    std::ostringstream csv;
    write_analysis_csv(csv, a);
    CHECK(csv.str().rfind("model,term,estimate,robust_se,stat,p,stars\nols,Readability,", 0) == 0);
}

TEST_CASE("constant outcome fails cleanly in every family") {
    std::mt19937_64 rng(4);
    const auto x = random_features(rng, 600);
    const std::vector<double> y(600, 0.0);
    const CitationAnalysis a = run_citation_analysis(x, y);
    CHECK_FALSE(a.ols);
    CHECK_FALSE(a.logit);
    CHECK_FALSE(a.probit);
    CHECK(a.errors.size() == 3);
    CHECK(render_citation_analysis(a, "x").find("not estimated") != std::string::npos);
}

TEST_CASE("a failing family does not stop the others") {
    // x = 1 exactly when cited: logit and probit separate, OLS still fits.
    std::mt19937_64 rng(5);
    auto x = random_features(rng, 800);
    std::vector<double> y(800);
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = i % 3 == 0 ? 1.0 : 0.0;
        x[i].conversation = y[i] * 5.0;
    }
    const CitationAnalysis a = run_citation_analysis(x, y);
    CHECK(a.ols);
    CHECK_FALSE(a.logit);
    CHECK_FALSE(a.probit);
    CHECK(a.errors.at(Family::logit).find("separation") != std::string::npos);
}

TEST_CASE("ranking analysis on 20 categories yields 19 increasing thresholds") {
    std::mt19937_64 rng(6);
    const auto x = random_features(rng, 4000);
    std::vector<Dataset1BRow> rows(x.size());
    std::uniform_int_distribution<int> rank(1, 20);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].features = x[i];
        rows[i].rank = rank(rng);
    }
    const RankingAnalysis a = run_ranking_analysis(rows);
    REQUIRE(a.ordered_logit);
    REQUIRE(a.ordered_probit);
    const auto& t = a.ordered_logit->thresholds;
    REQUIRE(t.size() == 19);
    for (Eigen::Index k = 1; k < t.size(); ++k) CHECK(t[k] > t[k - 1]);
    const std::string table = render_ranking_analysis(a, "Ranking");
    CHECK(table.find("Threshold 19") != std::string::npos);
    CHECK(table.find(kRankNote) != std::string::npos);
}

TEST_CASE("diversity on identical pages gives equal similarities and t = 0") {
    std::vector<Query> queries;
    std::vector<WebPage> pages;
    std::vector<ChatResponse> responses;
    for (int q = 0; q < 4; ++q) {
        const std::string qid = "q" + std::to_string(q);
        queries.push_back({qid, "ties"});
        for (int k = 0; k < 4; ++k) {
            const std::string wid = qid + "w" + std::to_string(k);
            pages.push_back(make_page(qid, wid, "The same tie text on every page.", k + 1, "same tie"));
        }
        responses.push_back({qid, {sentence(0, "Ties.", {qid + "w2", qid + "w3"})}});
    }
    // One query with a single citation is excluded.
    queries.push_back({"z", "ties"});
    pages.push_back(make_page("z", "zw0", "Only page.", 1, "only"));
    responses.push_back({"z", {sentence(0, "Only.", {"zw0"})}});
    const Corpus corpus = Corpus::build(queries, pages, responses);
    Fixture fx(corpus);
    auto rows = build_dataset_2(corpus, fx.ctx).rows;
    CitationMap cites;
    for (const auto& r : corpus.queries()) {
        for (const auto& s : corpus.response(r.query_id)->sentences) {
            for (const auto& id : s.cited_web_ids) cites[{r.query_id, id}] = 1;
        }
    }
    for (const auto& r : rows) cites.try_emplace({r.query_id, r.web_id}, 0);
    CHECK(apply_citations(rows, cites) == 0);
    const DiversityAnalysis d = run_diversity_analysis(corpus, rows, fx.embedder);
    CHECK(d.records.size() == 4);
    CHECK(d.excluded_few_citations == 1);
    CHECK(d.records.size() + d.excluded_few_citations + d.excluded_few_listed == corpus.queries().size());
    for (const auto& r : d.records) {
        CHECK(r.n_cited == 2);
        CHECK(r.sim_cited == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.sim_top_ranked == doctest::Approx(1.0).epsilon(1e-12));
    }
    REQUIRE(d.ttest);
    CHECK(d.ttest->t == 0.0);
    CHECK(d.ttest->p == 1.0);
}

TEST_CASE("diversity compares cited pages with the best-ranked ones") {
    // Cited pages share vocabulary; the top-ranked pages do not.
    std::vector<Query> queries;
    std::vector<WebPage> pages;
    std::vector<ChatResponse> responses;
    std::mt19937_64 rng(8);
    for (int q = 0; q < 30; ++q) {
        const std::string qid = fmt::format("q{:02d}", q);
        queries.push_back({qid, "ties"});
        const std::string shared = oracle::random_words(rng, 10);
        for (int k = 0; k < 6; ++k) {
            const std::string wid = fmt::format("{}w{}", qid, k);
            const bool cited = k >= 3;
            const std::string text = cited ? shared + oracle::random_words(rng, 3) : oracle::random_words(rng, 13);
            pages.push_back(make_page(qid, wid, text, k + 1, text.substr(0, 10)));
        }
        responses.push_back({qid, {sentence(0, "Ties.", {qid + "w3", qid + "w4", qid + "w5"})}});
    }
    const Corpus corpus = Corpus::build(queries, pages, responses);
    Fixture fx(corpus);
    auto rows = build_dataset_2(corpus, fx.ctx).rows;
    for (auto& r : rows) r.cited = r.web_id.back() >= '3' ? 1 : 0;
    const DiversityAnalysis d = run_diversity_analysis(corpus, rows, fx.embedder);
    REQUIRE(d.records.size() == 30);
    REQUIRE(d.ttest);
    CHECK(d.ttest->t > 0.0);
    CHECK(d.ttest->p < 0.01);
    CHECK(d.ttest->mean_a > d.ttest->mean_b);
    std::ostringstream csv;
    write_diversity_csv(csv, d);
    CHECK(csv.str().rfind("query_id,n_cited,sim_cited,sim_top_ranked\nq00,3,", 0) == 0);
    CHECK(render_diversity_analysis(d).find("Welch t") != std::string::npos);
}

TEST_CASE("dataset summary lists the outcome then the features") {
    std::vector<Dataset1ARow> rows(4);
    for (int i = 0; i < 4; ++i) {
        rows[static_cast<std::size_t>(i)].cited = i == 0 ? 1 : 0;
        rows[static_cast<std::size_t>(i)].features.readability = -10.0 * i;
    }
    const SummaryTable t = dataset_summary(std::span<const Dataset1ARow>(rows));
    REQUIRE(t.size() == 8);
    CHECK(t[0].statistic == "Cited");
    CHECK(t[0].mean == 0.25);
    CHECK(t[1].statistic == "Readability");
    CHECK(t[1].median == -15.0);
    CHECK(t[7].statistic == "Perplexity");
    const std::vector<Dataset1BRow> one(1);
    const SummaryTable single = dataset_summary(std::span<const Dataset1BRow>(one));
    CHECK(single[0].statistic == "Rank");
    CHECK(single[0].sd_undefined);
    CHECK_THROWS_AS(dataset_summary(std::span<const Dataset2Row>()), ValidationError);
}
