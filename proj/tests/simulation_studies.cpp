// Monte Carlo checks of the simulator against the pipeline. Slower than the
// unit suite, so they run as their own ctest entry.

#include <doctest.h>

#include <cmath>

#include <fmt/format.h>

#include "citecrit/pipelines.hpp"
#include "citecrit/simulator.hpp"

using namespace citecrit;

namespace {

std::shared_ptr<const FeatureResources> resources() {
    static const auto res = std::make_shared<const FeatureResources>(FeatureResources::load());
    return res;
}

// Number of seeds where every listed slope lies within 3 robust SEs of its
// planted value.
int recovered_seeds(sim::SimSpec spec, int seeds, const std::vector<std::size_t>& slopes) {
    HashingEmbedder embedder;
    int ok = 0;
    for (int seed = 1; seed <= seeds; ++seed) {
        spec.seed = static_cast<std::uint64_t>(seed);
        const auto out = sim::generate(spec, resources());
        const FeatureExtractor extractor(resources(), train_corpus_lm(out.corpus));
        const auto d = build_dataset_1a(out.corpus, {embedder, extractor, {}});
        REQUIRE(d.rows.size() >= 20000);
        const auto analysis = run_citation_analysis(d.rows);
        REQUIRE(analysis.ols);
        bool all = true;
        for (std::size_t j : slopes) {
            const double z = (analysis.ols->betas[j] - spec.citation.slopes[j]) / analysis.ols->robust_se[j];
            all = all && std::abs(z) <= 3.0;
        }
        ok += all;
    }
    return ok;
}

struct GapRun {
    double gap = 0.0;
    double t = 0.0;
};

GapRun diversity_run(sim::SimSpec spec, std::uint64_t seed) {
    spec.seed = seed;
    const auto out = sim::generate(spec, resources());
    HashingEmbedder embedder;
    const FeatureExtractor extractor(resources(), train_corpus_lm(out.corpus));
    auto d = build_dataset_2(out.corpus, {embedder, extractor, {}});
    apply_citations(d.rows, out.rag_citations);
    const auto a = run_diversity_analysis(out.corpus, d.rows, embedder);
    REQUIRE(a.ttest);
    double gap = 0.0;
    for (const auto& r : a.records) gap += r.sim_cited - r.sim_top_ranked;
    return {gap / static_cast<double>(a.records.size()), a.ttest->t};
}

}  // namespace

TEST_CASE("planted perplexity slope alone is recovered by OLS") {
    auto spec = sim::preset("null");
    spec.n_queries = 300;
    spec.citation.slopes[6] = -0.03;
    const int ok = recovered_seeds(spec, 20, {6});
    MESSAGE(fmt::format("{}/20 seeds within 3 robust SEs", ok));
    CHECK(ok >= 19);
}

TEST_CASE("all planted slopes of the chat citation preset are recovered by OLS") {
    auto spec = sim::preset("chat_citation");
    spec.n_queries = 300;
    const int ok = recovered_seeds(spec, 20, {0, 1, 2, 3, 4, 5, 6});
    MESSAGE(fmt::format("{}/20 seeds within 3 robust SEs", ok));
    CHECK(ok >= 19);
}

TEST_CASE("planted diversity gap is met within 0.02 across seeds") {
    auto base = sim::preset("null");
    base.n_queries = 600;
    const auto planted = sim::plant_diversity(base, 0.037, resources());
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const GapRun run = diversity_run(planted, seed);
        CAPTURE(seed);
        CHECK(std::abs(run.gap - 0.037) <= 0.02);
        CHECK(run.t > 0.0);
    }
}

TEST_CASE("zero diversity gap gives t-statistics centred on zero") {
    auto base = sim::preset("null");
    base.n_queries = 600;
    const auto planted = sim::plant_diversity(base, 0.0, resources());
    double sum = 0.0;
    const int seeds = 10;
    for (int seed = 1; seed <= seeds; ++seed) sum += diversity_run(planted, static_cast<std::uint64_t>(seed)).t;
    const double mean_t = sum / seeds;
    MESSAGE(fmt::format("mean t over {} seeds: {:.3f}", seeds, mean_t));
    // Under the null each t is roughly standard normal: 3 SEs of the mean.
    CHECK(std::abs(mean_t) < 3.0 / std::sqrt(static_cast<double>(seeds)));
}
