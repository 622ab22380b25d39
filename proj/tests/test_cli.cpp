#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "citecrit/error.hpp"
#include "citecrit/pipelines.hpp"
#include "citecrit/ragclient.hpp"
#include "cli.hpp"

using namespace citecrit;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "citecrit");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("citecrit_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

json manifest(const fs::path& dir, const std::string& command) {
    return json::parse(slurp(dir / ("manifest." + command + ".json")));
}

const std::string kMinimal = std::string(CITECRIT_TEST_DATA_DIR) + "/minimal_capture.jsonl";

}  // namespace

TEST_CASE("config strings interpolate environment variables") {
    ::setenv("CITECRIT_TEST_TOKEN", "s3cret", 1);
    ::unsetenv("CITECRIT_TEST_MISSING");
    std::vector<std::string> problems;
    const json in = {{"rag", {{"token", "Bearer ${CITECRIT_TEST_TOKEN}"}, {"url", "${CITECRIT_TEST_MISSING}/x"}}},
                     {"seed", 4}};
    const json out = cli::interpolate_env(in, problems);
    CHECK(out["rag"]["token"] == "Bearer s3cret");
    CHECK(out["seed"] == 4);
    REQUIRE(problems.size() == 1);
    CHECK(problems[0].find("CITECRIT_TEST_MISSING") != std::string::npos);
}

TEST_CASE("config errors list every problem at once") {
    const json doc = {{"chunk_len_chars", 0},
                      {"colour", "blue"},
                      {"corpus", "/no/such/capture.jsonl"},
                      {"families", {"ols", "tobit"}},
                      {"rag", {{"lcs_threshold", 1.5}}}};
    try {
        cli::parse_run_config(doc);
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.category() == ErrorCategory::config);
        const std::string msg = e.what();
        CHECK(msg.find("5 problems") != std::string::npos);
        for (const char* needle : {"chunk_len_chars", "colour", "/no/such/capture.jsonl", "tobit", "lcs_threshold"}) {
            CHECK_MESSAGE(msg.find(needle) != std::string::npos, needle);
        }
    }
}

TEST_CASE("manifests keep the uninterpolated config") {
    ::setenv("CITECRIT_TEST_TOKEN", "s3cret", 1);
    const fs::path dir = scratch("manifest");
    std::ofstream(dir / "run.json") << R"({"rag": {"token": "${CITECRIT_TEST_TOKEN}"}})";
    const Result r = invoke({"summarize", "--config", (dir / "run.json").string(), "--corpus", kMinimal, "--out",
                             (dir / "out").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    const std::string m = slurp(dir / "out" / "manifest.summarize.json");
    CHECK(m.find("s3cret") == std::string::npos);
    CHECK(m.find("${CITECRIT_TEST_TOKEN}") != std::string::npos);
    CHECK(manifest(dir / "out", "summarize")["outputs"].contains("summary.csv"));
}

TEST_CASE("exit codes follow the error category") {
    const fs::path dir = scratch("exit");
    CHECK(invoke({}).code == exit_code_for(ErrorCategory::usage));
    CHECK(invoke({"frobnicate"}).code == exit_code_for(ErrorCategory::usage));
    CHECK(invoke({"build", "3"}).code == exit_code_for(ErrorCategory::usage));
    CHECK(invoke({"summarize", "--out", dir.string()}).code == exit_code_for(ErrorCategory::usage));

    const Result missing = invoke({"summarize", "--corpus", (dir / "absent.jsonl").string(), "--out", dir.string()});
    CHECK(missing.code == exit_code_for(ErrorCategory::config));
    CHECK(missing.err.rfind("error[config]:", 0) == 0);

    std::ofstream(dir / "bad.jsonl") << "{\"kind\":\"query\",\"query_id\":\"q1\"\n";
    const Result bad = invoke({"summarize", "--corpus", (dir / "bad.jsonl").string(), "--out", dir.string()});
    CHECK(bad.code == exit_code_for(ErrorCategory::parse));
    CHECK(bad.err.rfind("error[parse]:", 0) == 0);

    std::ofstream(dir / "cfg.json") << R"({"simulate": {"n_queries": "many"}})";
    CHECK(invoke({"simulate", "--config", (dir / "cfg.json").string(), "--out", dir.string()}).code ==
          exit_code_for(ErrorCategory::config));

    CHECK(invoke({"rag-collect", "--corpus", kMinimal, "--out", dir.string()}).code ==
          exit_code_for(ErrorCategory::config));
    CHECK(invoke({"--help"}).code == 0);
}

TEST_CASE("reruns with the same seed produce identical outputs") {
    const fs::path a = scratch("rerun_a"), b = scratch("rerun_b");
    for (const fs::path& dir : {a, b}) {
        const Result r = invoke({"simulate", "--preset", "ranking", "--queries", "40", "--seed", "11", "--out",
                                 dir.string()});
        REQUIRE_MESSAGE(r.code == 0, r.err);
    }
    const json ma = manifest(a, "simulate"), mb = manifest(b, "simulate");
    CHECK(ma["outputs"] == mb["outputs"]);
    CHECK(ma["outputs"].size() == 7);
    CHECK(slurp(a / "corpus.jsonl") == slurp(b / "corpus.jsonl"));

    for (const fs::path& dir : {a, b}) {
        REQUIRE(invoke({"build", "1b", "--corpus", (dir / "corpus.jsonl").string(), "--out", (dir / "1b").string()})
                    .code == 0);
    }
    CHECK(slurp(a / "1b" / "dataset_1b.csv") == slurp(b / "1b" / "dataset_1b.csv"));
    CHECK(manifest(a / "1b", "build-1b")["outputs"] == manifest(b / "1b", "build-1b")["outputs"]);

    const Result other = invoke({"simulate", "--preset", "ranking", "--queries", "40", "--seed", "12", "--out",
                                 (a / "other").string()});
    REQUIRE(other.code == 0);
    CHECK(manifest(a / "other", "simulate")["outputs"]["corpus.jsonl"] != ma["outputs"]["corpus.jsonl"]);
}

TEST_CASE("simulate, build and fit end to end") {
    const fs::path dir = scratch("e2e");
    const std::string corpus = (dir / "corpus.jsonl").string();
    REQUIRE(invoke({"simulate", "--preset", "chat_citation", "--queries", "60", "--out", dir.string()}).code == 0);
    REQUIRE(invoke({"build", "1a", "--corpus", corpus, "--out", dir.string()}).code == 0);
    const Result fit = invoke({"fit", "citation", "--dataset", (dir / "dataset_1a.csv").string(), "--out", dir.string()});
    REQUIRE_MESSAGE(fit.code == 0, fit.err);
    for (const char* model : {"OLS", "Logistic", "Probit", "Perplexity", "Observations"}) {
        CHECK_MESSAGE(fit.out.find(model) != std::string::npos, model);
    }
    CHECK(fit.out == slurp(dir / "fit_citation.txt"));
    CHECK(fs::file_size(dir / "fit_citation.csv") > 0);

    std::ofstream(dir / "ols.json") << R"({"families": ["ols"]})";
    const Result ols = invoke({"fit", "citation", "--config", (dir / "ols.json").string(), "--dataset",
                               (dir / "dataset_1a.csv").string(), "--out", (dir / "ols").string()});
    REQUIRE(ols.code == 0);
    CHECK(ols.out.find("OLS") != std::string::npos);
    CHECK(ols.out.find("Probit") == std::string::npos);

    const Result rep = invoke({"report", "--corpus", corpus, "--citations", (dir / "rag_citations.csv").string(),
                               "--out", (dir / "report").string()});
    REQUIRE_MESSAGE(rep.code == 0, rep.err);
    const std::string md = slurp(dir / "report" / "report.md");
    for (const char* part : {"Dataset 1A", "Dataset 1B", "Dataset 2", "Ranking", "Content diversity"}) {
        CHECK_MESSAGE(md.find(part) != std::string::npos, part);
    }
}

TEST_CASE("featurize scores a text CSV") {
    const fs::path dir = scratch("featurize");
    std::ofstream(dir / "in.csv") << "id,text\n"
                                     "a,\"Plain words, short and clear. I think it is nice.\"\n"
                                     "b,Photosynthesis converts electromagnetic radiation into chemical energy.\n";
    const Result r = invoke({"featurize", "--input", (dir / "in.csv").string(), "--corpus", kMinimal, "--out",
                             dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    std::istringstream lines(slurp(dir / "features.csv"));
    std::string header, first, second, extra;
    std::getline(lines, header);
    std::getline(lines, first);
    std::getline(lines, second);
    CHECK_FALSE(std::getline(lines, extra));
    CHECK(header == "id,readability,analytic,certitude,subjectivity,polarity,conversation,perplexity,perplexity_exp");
    CHECK(first.rfind("a,", 0) == 0);
    CHECK(second.rfind("b,", 0) == 0);
}

TEST_CASE("rag-collect replays archived responses without a network") {
    const fs::path dir = scratch("rag");
    const std::string corpus = (dir / "corpus.jsonl").string();
    REQUIRE(invoke({"simulate", "--preset", "null", "--queries", "12", "--out", dir.string()}).code == 0);

    // The documents the command will assemble, rebuilt here to script the archive.
    const Corpus c = load_capture_file(corpus);
    HashingEmbedder embedder;
    const FeatureExtractor extractor(std::make_shared<const FeatureResources>(FeatureResources::load()),
                                     train_corpus_lm(c));
    const auto d2 = build_dataset_2(c, PipelineContext{embedder, extractor, {}});
    const rag::RawArchive archive(dir / "raw_responses");
    std::set<std::pair<std::string, std::string>> expected;
    for (const rag::SourceDocument& doc : rag::documents_from_rows(d2.rows)) {
        const rag::Segment& seg = doc.segments[1];
        rag::AnnotatedResponse resp{doc.query_id, "An answer 【3†source】.", {{"【3†source】", seg.text.substr(0, 60), {}}}};
        archive.store(doc.query_id, rag::render_response(resp));
        expected.insert({doc.query_id, seg.web_id});
    }

    const Result r = invoke({"rag-collect", "--replay", "--corpus", corpus, "--out", dir.string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(r.out.find(" 0 requests") != std::string::npos);
    std::ifstream f(dir / "rag_citations.csv");
    const CitationMap got = load_citations(f);
    CHECK(got.size() == d2.rows.size());
    for (const auto& [key, flag] : got) CHECK(flag == static_cast<int>(expected.count(key)));
    CHECK(slurp(dir / "unresolved.csv").find('\n') == slurp(dir / "unresolved.csv").size() - 1);
}
