#include "cli.hpp"

#include <Eigen/Core>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "citecrit/corpus.hpp"
#include "citecrit/csv.hpp"
#include "citecrit/error.hpp"
#include "citecrit/hashing.hpp"
#include "citecrit/simulator.hpp"
#include "citecrit/summary.hpp"

#ifndef CITECRIT_VERSION
#define CITECRIT_VERSION "0.0.0"
#endif

namespace citecrit::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

json interpolate_env(const json& j, std::vector<std::string>& problems) {
    if (j.is_object()) {
        json out = json::object();
        for (const auto& [k, v] : j.items()) out[k] = interpolate_env(v, problems);
        return out;
    }
    if (j.is_array()) {
        json out = json::array();
        for (const auto& v : j) out.push_back(interpolate_env(v, problems));
        return out;
    }
    if (!j.is_string()) return j;
    static const std::regex var(R"(\$\{([A-Za-z_][A-Za-z0-9_]*)\})");
    const std::string s = j.get<std::string>();
    std::string result;
    auto last = s.cbegin();
    for (auto it = std::sregex_iterator(s.begin(), s.end(), var); it != std::sregex_iterator(); ++it) {
        result.append(last, s.cbegin() + it->position(0));
        const std::string name = it->str(1);
        if (const char* value = std::getenv(name.c_str())) {
            result += value;
        } else {
            problems.push_back(fmt::format("environment variable {} is not set", name));
        }
        last = s.cbegin() + it->position(0) + it->length(0);
    }
    result.append(last, s.cend());
    return result;
}

namespace {

class Checker {
public:
    explicit Checker(std::vector<std::string>& problems) : problems_(problems) {}

    void keys(const json& j, const std::string& where, std::initializer_list<std::string_view> allowed) {
        if (!j.is_object()) {
            problems_.push_back(fmt::format("{} must be an object", where));
            return;
        }
        for (const auto& [k, v] : j.items()) {
            if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
                problems_.push_back(fmt::format("{}: unknown key '{}'", where, k));
            }
        }
    }

    template <typename T>
    void read(const json& j, const char* key, T& out, const std::string& where) {
        if (!j.is_object() || !j.contains(key)) return;
        const json& v = j.at(key);
        const std::string name = where.empty() ? key : where + "." + key;
        if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) return problem(name, "must be a string");
            out = v.get<std::string>();
        } else if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) return problem(name, "must be true or false");
            out = v.get<bool>();
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_unsigned()) return problem(name, "must be a non-negative integer");
            out = v.get<T>();
        } else {
            if (!v.is_number()) return problem(name, "must be a number");
            out = v.get<T>();
        }
    }

    void problem(const std::string& name, const std::string& what) { problems_.push_back(name + " " + what); }

private:
    std::vector<std::string>& problems_;
};

void check_path(const std::string& path, bool directory, const std::string& name, std::vector<std::string>& problems) {
    if (path.empty()) return;
    std::error_code ec;
    if (directory ? !fs::is_directory(path, ec) : !fs::is_regular_file(path, ec)) {
        problems.push_back(fmt::format("{}: {} '{}' does not exist", name, directory ? "directory" : "file", path));
    }
}

}  // namespace

RunConfig parse_run_config(const json& doc) {
    std::vector<std::string> problems;
    Checker c(problems);
    RunConfig cfg;
    cfg.effective = doc;
    const json j = interpolate_env(doc, problems);
    c.keys(j, "config",
           {"corpus", "out", "lexicons", "lm", "idf", "chunk_len_chars", "chunk_len_tokens", "workers", "seed",
            "embedder", "features", "families", "rag", "simulate"});
    c.read(j, "corpus", cfg.corpus, "");
    c.read(j, "out", cfg.out, "");
    c.read(j, "lexicons", cfg.lexicons, "");
    c.read(j, "lm", cfg.lm, "");
    c.read(j, "idf", cfg.embedder.idf_path, "");
    c.read(j, "chunk_len_chars", cfg.pipeline.chunk_len_chars, "");
    c.read(j, "chunk_len_tokens", cfg.pipeline.chunk_len_tokens, "");
    c.read(j, "workers", cfg.pipeline.workers, "");
    c.read(j, "seed", cfg.seed, "");
    if (cfg.pipeline.chunk_len_chars == 0) problems.push_back("chunk_len_chars must be positive");
    if (cfg.pipeline.chunk_len_tokens == 0) problems.push_back("chunk_len_tokens must be positive");

    if (j.contains("embedder")) {
        const json& e = j["embedder"];
        c.keys(e, "embedder", {"provider", "dimension", "url", "token", "timeout_ms", "batch_size", "max_in_flight"});
        std::string provider = "builtin";
        c.read(e, "provider", provider, "embedder");
        if (provider == "builtin") {
            cfg.embedder.provider = EmbedderProvider::builtin_hash_tfidf;
        } else if (provider == "service") {
            cfg.embedder.provider = EmbedderProvider::external_service;
        } else {
            problems.push_back(fmt::format("embedder.provider must be 'builtin' or 'service', not '{}'", provider));
        }
        c.read(e, "dimension", cfg.embedder.dimension, "embedder");
        cfg.embedder.service.dimension = cfg.embedder.dimension;
        c.read(e, "url", cfg.embedder.endpoint.url, "embedder");
        c.read(e, "token", cfg.embedder.endpoint.bearer_token, "embedder");
        long long timeout = cfg.embedder.endpoint.timeout.count();
        c.read(e, "timeout_ms", timeout, "embedder");
        cfg.embedder.endpoint.timeout = std::chrono::milliseconds(timeout);
        c.read(e, "batch_size", cfg.embedder.service.batch_size, "embedder");
        c.read(e, "max_in_flight", cfg.embedder.service.max_in_flight, "embedder");
        if (cfg.embedder.provider == EmbedderProvider::external_service && cfg.embedder.endpoint.url.empty()) {
            problems.push_back("embedder.url is required for the service provider");
        }
        if (cfg.embedder.dimension == 0) problems.push_back("embedder.dimension must be positive");
    }

    if (j.contains("features")) {
        const json& f = j["features"];
        c.keys(f, "features", {"negation_factor", "intensifier_factor", "window"});
        c.read(f, "negation_factor", cfg.features.negation_factor, "features");
        c.read(f, "intensifier_factor", cfg.features.intensifier_factor, "features");
        c.read(f, "window", cfg.features.window, "features");
    }

    if (j.contains("families")) {
        const json& f = j["families"];
        if (!f.is_array()) {
            problems.push_back("families must be an array");
        } else {
            cfg.families.clear();
            for (const json& name : f) {
                bool found = false;
                for (Family fam : {Family::ols, Family::logit, Family::probit, Family::ordered_logit,
                                   Family::ordered_probit}) {
                    if (name.is_string() && name.get<std::string>() == family_name(fam)) {
                        cfg.families.insert(fam);
                        found = true;
                    }
                }
                if (!found) problems.push_back(fmt::format("families: unknown family {}", name.dump()));
            }
        }
    }

    if (j.contains("rag")) {
        const json& r = j["rag"];
        c.keys(r, "rag",
               {"url", "token", "timeout_ms", "max_attempts", "backoff_ms", "max_concurrent", "min_interval_ms",
                "instructions", "marker_pattern", "lcs_threshold", "archive"});
        c.read(r, "url", cfg.rag.endpoint.url, "rag");
        c.read(r, "token", cfg.rag.endpoint.bearer_token, "rag");
        long long timeout = cfg.rag.endpoint.timeout.count();
        c.read(r, "timeout_ms", timeout, "rag");
        cfg.rag.endpoint.timeout = std::chrono::milliseconds(timeout);
        c.read(r, "max_attempts", cfg.rag.service.retry.max_attempts, "rag");
        long long backoff = cfg.rag.service.retry.initial_backoff.count();
        c.read(r, "backoff_ms", backoff, "rag");
        cfg.rag.service.retry.initial_backoff = std::chrono::milliseconds(backoff);
        c.read(r, "max_concurrent", cfg.rag.service.max_concurrent, "rag");
        long long interval = 0;
        c.read(r, "min_interval_ms", interval, "rag");
        cfg.rag.service.min_interval = std::chrono::milliseconds(interval);
        c.read(r, "instructions", cfg.rag.service.instructions, "rag");
        c.read(r, "marker_pattern", cfg.rag.service.grammar.pattern, "rag");
        c.read(r, "lcs_threshold", cfg.rag.lcs_threshold, "rag");
        c.read(r, "archive", cfg.rag.archive, "rag");
        if (!(cfg.rag.lcs_threshold > 0.0 && cfg.rag.lcs_threshold <= 1.0)) {
            problems.push_back("rag.lcs_threshold must lie in (0, 1]");
        }
        try {
            std::regex probe(cfg.rag.service.grammar.pattern);
        } catch (const std::regex_error& e) {
            problems.push_back(fmt::format("rag.marker_pattern does not compile: {}", e.what()));
        }
    }

    if (j.contains("simulate")) {
        cfg.simulate = j["simulate"];
        try {
            sim::spec_from_json(cfg.simulate);
        } catch (const Error& e) {
            problems.push_back(e.what());
        }
    }

    check_path(cfg.corpus, false, "corpus", problems);
    check_path(cfg.lexicons, true, "lexicons", problems);
    check_path(cfg.lm, false, "lm", problems);
    check_path(cfg.embedder.idf_path, false, "idf", problems);

    if (!problems.empty()) {
        std::string msg = fmt::format("{} problem{} in the run configuration:", problems.size(),
                                      problems.size() == 1 ? "" : "s");
        for (const std::string& p : problems) msg += "\n  - " + p;
        throw Error(ErrorCategory::config, msg);
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// Run context

namespace {

std::string read_text_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

json read_json_file(const std::string& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError(0, fmt::format("{}: {}", path, e.what()));
    }
}

/// Tracks everything a command reads and writes for its manifest.
class Run {
public:
    Run(std::string command, RunConfig config, std::vector<std::string> argv, std::ostream& out)
        : command_(std::move(command)), config_(std::move(config)), argv_(std::move(argv)), out_(out) {
        std::error_code ec;
        fs::create_directories(config_.out, ec);
        if (ec || !fs::is_directory(config_.out)) {
            throw Error(ErrorCategory::config, fmt::format("output directory {} cannot be created", config_.out));
        }
        const fs::path probe = fs::path(config_.out) / ".write-probe";
        if (!std::ofstream(probe)) throw Error(ErrorCategory::config, "output directory is not writable: " + config_.out);
        fs::remove(probe, ec);
    }

    const RunConfig& config() const { return config_; }
    std::ostream& out() { return out_; }

    void input(const std::string& path) {
        if (!path.empty()) inputs_[path] = sha256_file(path);
    }

    fs::path path(const std::string& rel) const { return fs::path(config_.out) / rel; }

    void write(const std::string& rel, const std::string& content) {
        const fs::path p = path(rel);
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        std::ofstream f(p, std::ios::binary);
        f << content;
        if (!f) throw IoError("cannot write " + p.string());
        outputs_[rel] = sha256_hex(content);
    }

    template <typename Fn>
    void write_with(const std::string& rel, Fn&& fn) {
        std::ostringstream ss;
        fn(ss);
        write(rel, ss.str());
    }

    void record_output_file(const std::string& rel) { outputs_[rel] = sha256_file(path(rel)); }

    void finish() {
        nlohmann::ordered_json m;
        m["command"] = command_;
        m["arguments"] = argv_;
        m["config_sha256"] = sha256_hex(config_.effective.dump());
        m["config"] = config_.effective;
        m["seed"] = config_.seed;
        m["inputs"] = inputs_;
        m["outputs"] = outputs_;
        m["versions"] = {
            {"citecrit", CITECRIT_VERSION},
            {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
            {"nlohmann_json", fmt::format("{}.{}.{}", NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                                          NLOHMANN_JSON_VERSION_PATCH)},
            {"fmt", FMT_VERSION},
            {"spdlog", fmt::format("{}.{}.{}", SPDLOG_VER_MAJOR, SPDLOG_VER_MINOR, SPDLOG_VER_PATCH)}};
        std::string name = command_;
        std::replace(name.begin(), name.end(), ' ', '-');
        const fs::path p = path("manifest." + name + ".json");
        std::ofstream(p, std::ios::binary) << m.dump(2) << "\n";
    }

private:
    std::string command_;
    RunConfig config_;
    std::vector<std::string> argv_;
    std::ostream& out_;
    std::map<std::string, std::string> inputs_;
    std::map<std::string, std::string> outputs_;
};

Corpus load_corpus(Run& run) {
    const std::string& path = run.config().corpus;
    if (path.empty()) throw Error(ErrorCategory::usage, "no corpus given (use --corpus or the config key)");
    run.input(path);
    return load_capture_file(path);
}

struct Toolkit {
    std::shared_ptr<const FeatureResources> resources;
    std::unique_ptr<Embedder> embedder;
    std::unique_ptr<FeatureExtractor> extractor;

    PipelineContext context(const RunConfig& cfg) const { return {*embedder, *extractor, cfg.pipeline}; }
};

std::shared_ptr<const LanguageModel> load_or_train_lm(Run& run, const Corpus* corpus,
                                                      std::span<const std::string> fallback_texts = {}) {
    const RunConfig& cfg = run.config();
    if (!cfg.lm.empty()) {
        run.input(cfg.lm);
        std::ifstream f(cfg.lm);
        return std::make_shared<NGramLM>(NGramLM::load(f));
    }
    if (corpus) return train_corpus_lm(*corpus);
    spdlog::info("no language model or corpus given; training on the input texts");
    return std::make_shared<NGramLM>(NGramLM::train_texts(fallback_texts, NGramOptions{}));
}

Toolkit make_toolkit(Run& run, std::shared_ptr<const LanguageModel> lm) {
    const RunConfig& cfg = run.config();
    Toolkit t;
    t.resources = std::make_shared<const FeatureResources>(FeatureResources::load(cfg.lexicons));
    if (!cfg.lexicons.empty()) {
        for (const auto& entry : fs::directory_iterator(cfg.lexicons)) {
            if (entry.is_regular_file()) run.input(entry.path().string());
        }
    }
    run.input(cfg.embedder.idf_path);
    t.embedder = make_embedder(cfg.embedder);
    t.extractor = std::make_unique<FeatureExtractor>(t.resources, std::move(lm), cfg.features);
    return t;
}

template <typename Row>
void keep_families(std::optional<Row>& slot, Family f, const std::set<Family>& keep) {
    if (!keep.count(f)) slot.reset();
}

void report_build(Run& run, std::string_view name, const BuildReport& report, std::size_t rows) {
    run.out() << fmt::format("dataset {}: {} rows from {} pages ({} skipped)\n", name, rows, report.pages_captured,
                             report.pages_skipped);
}

CitationMap load_citations_file(Run& run, const std::string& path) {
    run.input(path);
    std::ifstream f(path);
    if (!f) throw IoError("cannot open " + path);
    return load_citations(f);
}

// ---------------------------------------------------------------------------
// Commands

void cmd_ingest(Run& run) {
    const Corpus corpus = load_corpus(run);
    run.write_with("corpus.jsonl", [&](std::ostream& o) { save_corpus(corpus, o); });
    std::size_t listed = 0;
    for (const WebPage& p : corpus.pages()) listed += p.listed;
    run.out() << fmt::format("{} queries, {} pages ({} listed), {} responses\n", corpus.queries().size(),
                             corpus.pages().size(), listed, corpus.response_count());
}

std::string summary_text(Run& run, const Corpus& corpus) {
    const SummaryTable table = corpus_summary(corpus);
    const std::string text = render_summary(table, "Summary statistics of the raw capture");
    run.write_with("summary.csv", [&](std::ostream& o) { write_summary_csv(table, o); });
    run.write("summary.txt", text);
    return text;
}

void cmd_summarize(Run& run) {
    const Corpus corpus = load_corpus(run);
    run.out() << summary_text(run, corpus);
}

void build_one(Run& run, const Corpus& corpus, const Toolkit& tk, const std::string& which,
               const std::optional<CitationMap>& citations) {
    const PipelineContext ctx = tk.context(run.config());
    if (which == "1a") {
        const auto d = build_dataset_1a(corpus, ctx);
        run.write_with("dataset_1a.csv", [&](std::ostream& o) { write_dataset(o, d.rows); });
        run.write_with("selection_1a.csv", [&](std::ostream& o) { write_selection_log(o, d.rows); });
        run.write("summary_1a.txt", render_summary(dataset_summary(d.rows), "Dataset 1A"));
        report_build(run, "1A", d.report, d.rows.size());
    } else if (which == "1b") {
        const auto d = build_dataset_1b(corpus, ctx);
        run.write_with("dataset_1b.csv", [&](std::ostream& o) { write_dataset(o, d.rows); });
        run.write_with("selection_1b.csv", [&](std::ostream& o) { write_selection_log(o, d.rows); });
        run.write("summary_1b.txt", render_summary(dataset_summary(d.rows), "Dataset 1B"));
        report_build(run, "1B", d.report, d.rows.size());
    } else {
        auto d = build_dataset_2(corpus, ctx);
        if (citations) {
            const std::size_t unset = apply_citations(d.rows, *citations);
            if (unset > 0) spdlog::warn("{} dataset 2 rows have no citation flag", unset);
            if (unset == 0) run.write("summary_2.txt", render_summary(dataset_summary(d.rows), "Dataset 2"));
        }
        run.write_with("dataset_2.csv", [&](std::ostream& o) { write_dataset(o, d.rows); });
        run.write_with("selection_2.csv", [&](std::ostream& o) { write_selection_log(o, d.rows); });
        report_build(run, "2", d.report, d.rows.size());
    }
}

void cmd_build(Run& run, const std::string& which, const std::string& citations_path) {
    const Corpus corpus = load_corpus(run);
    const Toolkit tk = make_toolkit(run, load_or_train_lm(run, &corpus));
    std::optional<CitationMap> citations;
    if (!citations_path.empty()) citations = load_citations_file(run, citations_path);
    build_one(run, corpus, tk, which, citations);
}

std::string fit_citation(Run& run, const CitationAnalysis& a_in, const std::string& stem, std::string_view caption) {
    CitationAnalysis a = a_in;
    keep_families(a.ols, Family::ols, run.config().families);
    keep_families(a.logit, Family::logit, run.config().families);
    keep_families(a.probit, Family::probit, run.config().families);
    const std::string text = render_citation_analysis(a, caption) + fmt::format("N = {}\n", a.n);
    run.write(stem + ".txt", text);
    run.write_with(stem + ".csv", [&](std::ostream& o) { write_analysis_csv(o, a); });
    return text;
}

std::string fit_ranking(Run& run, const RankingAnalysis& a_in) {
    RankingAnalysis a = a_in;
    keep_families(a.ordered_logit, Family::ordered_logit, run.config().families);
    keep_families(a.ordered_probit, Family::ordered_probit, run.config().families);
    const std::string text =
        render_ranking_analysis(a, "Ranking of listed pages (ordered models)") + fmt::format("N = {}\n", a.n);
    run.write("fit_ranking.txt", text);
    run.write_with("fit_ranking.csv", [&](std::ostream& o) { write_analysis_csv(o, a); });
    return text;
}

void cmd_fit(Run& run, const std::string& kind, const std::string& dataset) {
    if (dataset.empty()) throw Error(ErrorCategory::usage, "fit needs --dataset");
    run.input(dataset);
    std::ifstream f(dataset);
    if (!f) throw IoError("cannot open " + dataset);
    if (kind == "citation") {
        const auto rows = read_dataset_1a(f);
        run.out() << fit_citation(run, run_citation_analysis(rows), "fit_citation", "Citation by the chat engine");
    } else if (kind == "ranking") {
        const auto rows = read_dataset_1b(f);
        run.out() << fit_ranking(run, run_ranking_analysis(rows));
    } else {
        const auto rows = read_dataset_2(f);
        run.out() << fit_citation(run, run_citation_analysis(rows), "fit_rag", "Citation by retrieval-augmented generation");
    }
}

void cmd_featurize(Run& run, const std::string& input) {
    if (input.empty()) throw Error(ErrorCategory::usage, "featurize needs --input (CSV with columns id,text)");
    run.input(input);
    std::ifstream f(input);
    if (!f) throw IoError("cannot open " + input);
    csv::Reader reader(f);
    const auto header = reader.next();
    if (!header || *header != std::vector<std::string>{"id", "text"}) {
        throw ParseError(1, input + ": expected header id,text");
    }
    std::vector<std::string> ids, texts;
    while (auto row = reader.next()) {
        if (row->size() != 2) throw ParseError(reader.line(), "expected 2 fields");
        ids.push_back((*row)[0]);
        texts.push_back((*row)[1]);
    }
    std::optional<Corpus> corpus;
    if (!run.config().corpus.empty()) corpus = load_corpus(run);
    const Toolkit tk = make_toolkit(run, load_or_train_lm(run, corpus ? &*corpus : nullptr, texts));
    std::vector<FeatureVector> features(texts.size());
    parallel_for(texts.size(), run.config().pipeline.workers,
                 [&](std::size_t i) { features[i] = tk.extractor->featurize(texts[i]); });
    run.write_with("features.csv", [&](std::ostream& o) {
        std::vector<std::string> head = {"id"};
        for (auto name : kFeatureNames) head.emplace_back(name);
        head.emplace_back("perplexity_exp");
        csv::write_row(o, head);
        for (std::size_t i = 0; i < ids.size(); ++i) {
            std::vector<std::string> row = {ids[i]};
            for (double v : features[i].regressors()) row.push_back(csv::format_double(v));
            row.push_back(csv::format_double(features[i].perplexity_exp));
            csv::write_row(o, row);
        }
    });
    run.out() << fmt::format("featurized {} texts\n", ids.size());
}

std::string diversity_text(Run& run, const Corpus& corpus, const Toolkit& tk, const CitationMap& citations) {
    auto d = build_dataset_2(corpus, tk.context(run.config()));
    const std::size_t unset = apply_citations(d.rows, citations);
    if (unset > 0) throw ValidationError(fmt::format("{} dataset 2 rows have no citation flag", unset));
    const auto a = run_diversity_analysis(corpus, d.rows, *tk.embedder);
    run.write_with("diversity.csv", [&](std::ostream& o) { write_diversity_csv(o, a); });
    const std::string text = render_diversity_analysis(a);
    run.write("diversity.txt", text);
    return text;
}

void cmd_diversity(Run& run, const std::string& citations_path) {
    if (citations_path.empty()) throw Error(ErrorCategory::usage, "diversity needs --citations");
    const Corpus corpus = load_corpus(run);
    const Toolkit tk = make_toolkit(run, load_or_train_lm(run, &corpus));
    run.out() << diversity_text(run, corpus, tk, load_citations_file(run, citations_path));
}

struct SimulateArgs {
    std::string preset = "null";
    std::string spec;
    bool reference_fixture = false;
    std::optional<std::size_t> queries;
    std::optional<double> diversity_gap;
    bool seed_given = false;
};

void cmd_simulate(Run& run, const SimulateArgs& args) {
    const RunConfig& cfg = run.config();
    if (args.reference_fixture) {
        const Corpus c = sim::make_reference_fixture(cfg.seed);
        run.write_with("corpus.jsonl", [&](std::ostream& o) { save_corpus(c, o); });
        run.out() << fmt::format("reference capture: {} queries, {} pages\n", c.queries().size(), c.pages().size());
        return;
    }
    sim::SimSpec spec = sim::spec_from_json(cfg.simulate, sim::preset(args.preset));
    if (!args.spec.empty()) {
        run.input(args.spec);
        spec = sim::spec_from_json(read_json_file(args.spec), spec);
    }
    if (args.seed_given || !cfg.simulate.contains("seed")) spec.seed = cfg.seed;
    if (args.queries) spec.n_queries = *args.queries;
    const auto resources = std::make_shared<const FeatureResources>(FeatureResources::load(cfg.lexicons));
    std::optional<double> gap = args.diversity_gap;
    if (!gap && cfg.simulate.contains("diversity_gap")) gap = cfg.simulate["diversity_gap"].get<double>();
    if (gap) spec = sim::plant_diversity(spec, *gap, resources);
    const auto out = sim::generate(spec, resources);
    run.write("spec.json", sim::spec_to_json(spec).dump(2) + "\n");
    run.write_with("corpus.jsonl", [&](std::ostream& o) { save_corpus(out.corpus, o); });
    run.write_with("ledger_1a.csv", [&](std::ostream& o) { sim::write_ledger(o, out.ledger_1a); });
    run.write_with("ledger_2.csv", [&](std::ostream& o) { sim::write_ledger(o, out.ledger_2); });
    run.write_with("rank_truth.csv", [&](std::ostream& o) { sim::write_rank_truth(o, out.ranks); });
    run.write_with("rag_citations.csv", [&](std::ostream& o) { write_citations(o, out.rag_citations); });
    run.write("planted.json", [&] {
        nlohmann::ordered_json p;
        p["citation_intercept"] = out.citation.intercept;
        p["rag_citation_intercept"] = out.rag_citation.intercept;
        p["rank_thresholds"] = out.rank_thresholds;
        return p.dump(2) + "\n";
    }());
    run.out() << fmt::format("simulated {} queries, {} pages, {} dataset 1A rows (seed {})\n", spec.n_queries,
                             out.corpus.pages().size(), out.ledger_1a.size(), spec.seed);
}

void cmd_rag_collect(Run& run, bool replay_only) {
    const RunConfig& cfg = run.config();
    const Corpus corpus = load_corpus(run);
    const Toolkit tk = make_toolkit(run, load_or_train_lm(run, &corpus));
    const auto d = build_dataset_2(corpus, tk.context(cfg));
    std::map<std::string, std::string> query_text;
    for (const Query& q : corpus.queries()) query_text[q.query_id] = q.text;
    std::vector<rag::CollectItem> items;
    for (auto& doc : rag::documents_from_rows(d.rows)) {
        const std::string text = query_text.at(doc.query_id);
        items.push_back({std::move(doc), text});
    }
    const rag::RawArchive archive(cfg.rag.archive.empty() ? run.path("raw_responses") : fs::path(cfg.rag.archive));
    std::unique_ptr<net::HttpJsonTransport> transport;
    if (!replay_only) {
        if (cfg.rag.endpoint.url.empty()) {
            throw Error(ErrorCategory::config, "rag.url is not configured; use --replay to work from archived responses");
        }
        transport = std::make_unique<net::HttpJsonTransport>(cfg.rag.endpoint);
    }
    const auto result = rag::collect(items, transport.get(), cfg.rag.service, archive, replay_only, cfg.rag.lcs_threshold);
    run.write_with("rag_citations.csv", [&](std::ostream& o) { write_citations(o, result.citations); });
    run.write_with("unresolved.csv", [&](std::ostream& o) { rag::write_unresolved(o, result.resolutions); });
    std::size_t cited = 0, unresolved = 0;
    for (const auto& [key, flag] : result.citations) cited += flag;
    for (const auto& r : result.resolutions) unresolved += r.unresolved.size();
    run.out() << fmt::format("{} documents, {} requests, {} cited pages, {} unresolved annotations\n", items.size(),
                             result.requests, cited, unresolved);
}

void cmd_report(Run& run, const std::string& citations_path) {
    const Corpus corpus = load_corpus(run);
    const Toolkit tk = make_toolkit(run, load_or_train_lm(run, &corpus));
    std::optional<CitationMap> citations;
    if (!citations_path.empty()) citations = load_citations_file(run, citations_path);
    const PipelineContext ctx = tk.context(run.config());

    std::string report = "# Citation and ranking report\n\n";
    auto section = [&](const std::string& title, const std::string& body) {
        report += "## " + title + "\n\n```\n" + body + "```\n\n";
    };
    section("Raw capture", summary_text(run, corpus));

    const auto d1a = build_dataset_1a(corpus, ctx);
    run.write_with("dataset_1a.csv", [&](std::ostream& o) { write_dataset(o, d1a.rows); });
    section("Dataset 1A", render_summary(dataset_summary(d1a.rows), "Dataset 1A"));
    section("Citation by the chat engine",
            fit_citation(run, run_citation_analysis(d1a.rows), "fit_citation", "Citation by the chat engine"));

    const auto d1b = build_dataset_1b(corpus, ctx);
    run.write_with("dataset_1b.csv", [&](std::ostream& o) { write_dataset(o, d1b.rows); });
    section("Dataset 1B", render_summary(dataset_summary(d1b.rows), "Dataset 1B"));
    section("Ranking", fit_ranking(run, run_ranking_analysis(d1b.rows)));

    if (citations) {
        auto d2 = build_dataset_2(corpus, ctx);
        const std::size_t unset = apply_citations(d2.rows, *citations);
        if (unset > 0) throw ValidationError(fmt::format("{} dataset 2 rows have no citation flag", unset));
        run.write_with("dataset_2.csv", [&](std::ostream& o) { write_dataset(o, d2.rows); });
        section("Dataset 2", render_summary(dataset_summary(d2.rows), "Dataset 2"));
        section("Citation by retrieval-augmented generation",
                fit_citation(run, run_citation_analysis(d2.rows), "fit_rag",
                             "Citation by retrieval-augmented generation"));
        section("Content diversity", diversity_text(run, corpus, tk, *citations));
    } else {
        report += "Dataset 2 analyses skipped: no --citations file given.\n";
    }
    run.write("report.md", report);
    run.out() << report;
}

}  // namespace

// ---------------------------------------------------------------------------
// Entry point

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Measure what shapes citation and ranking in search-engine captures."};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", CITECRIT_VERSION);

    std::string config_path, out_dir, corpus_path;
    std::optional<std::size_t> workers;
    std::optional<std::uint64_t> seed;
    bool verbose = false;
    app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "Output directory");
    app.add_option("--workers", workers, "Worker threads (0 = all cores)");
    app.add_option("--seed", seed, "Random seed");
    app.add_option("--corpus", corpus_path, "Capture file (JSONL)");
    app.add_flag("-v,--verbose", verbose, "Log progress");

    auto* ingest = app.add_subcommand("ingest", "Validate a capture and write it back normalized");
    auto* summarize = app.add_subcommand("summarize", "Summary statistics of a capture");

    std::string which, citations_path;
    auto* build = app.add_subcommand("build", "Build dataset 1a, 1b or 2");
    build->add_option("dataset", which, "1a, 1b or 2")->required()->check(CLI::IsMember({"1a", "1b", "2"}));
    build->add_option("--citations", citations_path, "CSV query_id,web_id,cited for dataset 2");

    std::string fit_kind, dataset_path;
    auto* fit = app.add_subcommand("fit", "Fit citation, ranking or rag models to a dataset CSV");
    fit->add_option("model", fit_kind, "citation, ranking or rag")
        ->required()
        ->check(CLI::IsMember({"citation", "ranking", "rag"}));
    fit->add_option("--dataset", dataset_path, "Dataset CSV")->required();

    std::string input_path;
    auto* featurize = app.add_subcommand("featurize", "Compute the seven features for texts in a CSV (id,text)");
    featurize->add_option("--input", input_path, "CSV with columns id,text")->required();

    auto* diversity = app.add_subcommand("diversity", "Compare similarity of cited and top-ranked pages");
    diversity->add_option("--citations", citations_path, "CSV query_id,web_id,cited")->required();

    SimulateArgs sim_args;
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic capture with planted preferences");
    simulate->add_option("--preset", sim_args.preset, "Starting spec")->check(CLI::IsMember(sim::preset_names()));
    simulate->add_option("--spec", sim_args.spec, "JSON spec applied over the preset")->check(CLI::ExistingFile);
    simulate->add_flag("--reference-fixture", sim_args.reference_fixture, "Write the fixed-shape 700-query capture instead");
    simulate->add_option("--queries", sim_args.queries, "Number of queries");
    simulate->add_option("--diversity-gap", sim_args.diversity_gap, "Plant this cited-vs-ranked similarity gap");

    bool replay_only = false;
    auto* rag_collect = app.add_subcommand("rag-collect", "Submit dataset 2 documents and resolve citations");
    rag_collect->add_flag("--replay", replay_only, "Use archived responses only (no network)");

    auto* report = app.add_subcommand("report", "Summary, datasets, fits and diversity in one run");
    report->add_option("--citations", citations_path, "CSV query_id,web_id,cited for dataset 2");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error[" << category_name(ErrorCategory::usage) << "]: " << e.what() << "\n";
        return exit_code_for(ErrorCategory::usage);
    }
    spdlog::set_level(verbose ? spdlog::level::info : spdlog::level::warn);

    try {
        json doc = json::object();
        if (!config_path.empty()) doc = read_json_file(config_path);
        if (!doc.is_object()) throw Error(ErrorCategory::config, config_path + ": top level must be an object");
        if (!out_dir.empty()) doc["out"] = out_dir;
        if (workers) doc["workers"] = *workers;
        if (seed) doc["seed"] = *seed;
        if (!corpus_path.empty()) doc["corpus"] = corpus_path;
        const RunConfig cfg = parse_run_config(doc);

        std::vector<std::string> args(argv + 1, argv + argc);
        CLI::App* sub = app.get_subcommands().front();
        std::string name = sub->get_name();
        if (sub == build) name += "-" + which;
        if (sub == fit) name += "-" + fit_kind;
        Run r(name, cfg, args, out);
        if (!config_path.empty()) r.input(config_path);

        if (sub == ingest) cmd_ingest(r);
        else if (sub == summarize) cmd_summarize(r);
        else if (sub == build) cmd_build(r, which, citations_path);
        else if (sub == fit) cmd_fit(r, fit_kind, dataset_path);
        else if (sub == featurize) cmd_featurize(r, input_path);
        else if (sub == diversity) cmd_diversity(r, citations_path);
        else if (sub == simulate) {
            sim_args.seed_given = seed.has_value();
            cmd_simulate(r, sim_args);
        } else if (sub == rag_collect) cmd_rag_collect(r, replay_only);
        else if (sub == report) cmd_report(r, citations_path);
        r.finish();
        return 0;
    } catch (const Error& e) {
        err << "error[" << category_name(e.category()) << "]: " << e.what() << "\n";
        return exit_code_for(e.category());
    } catch (const std::exception& e) {
        err << "error[internal]: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace citecrit::cli
