#include "citecrit/pipelines.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <exception>
#include <istream>
#include <iterator>
#include <mutex>
#include <ostream>
#include <thread>
#include <type_traits>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "citecrit/csv.hpp"
#include "citecrit/error.hpp"
#include "citecrit/hashing.hpp"
#include "citecrit/text.hpp"

namespace citecrit {

void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex mu;
    std::size_t failed_at = n;
    std::exception_ptr failure;
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mu);
                if (i < failed_at) {
                    failed_at = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

namespace {

bool usable(const WebPage& p) { return !text::trim(p.full_text).empty(); }

// Features of identical chunk texts are computed once per query.
class FeatureCache {
public:
    explicit FeatureCache(const FeatureExtractor& extractor) : extractor_(extractor) {}

    const FeatureVector& get(const std::string& chunk_text) {
        auto it = cache_.find(chunk_text);
        if (it == cache_.end()) it = cache_.emplace(chunk_text, extractor_.featurize(chunk_text)).first;
        return it->second;
    }

private:
    const FeatureExtractor& extractor_;
    std::unordered_map<std::string, FeatureVector> cache_;
};

std::string page_context(const WebPage& p) { return "web page " + p.web_id; }

template <typename Row>
Dataset<Row> run_per_query(const Corpus& corpus, const PipelineContext& ctx,
                           const std::function<std::vector<Row>(const Query&, BuildReport&)>& build) {
    const auto& queries = corpus.queries();
    std::vector<std::vector<Row>> parts(queries.size());
    std::vector<BuildReport> reports(queries.size());
    parallel_for(queries.size(), ctx.config.workers,
                 [&](std::size_t i) { parts[i] = build(queries[i], reports[i]); });
    Dataset<Row> out;
    std::size_t total = 0;
    for (const auto& p : parts) total += p.size();
    out.rows.reserve(total);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        std::move(parts[i].begin(), parts[i].end(), std::back_inserter(out.rows));
        out.report.pages_captured += reports[i].pages_captured;
        out.report.pages_skipped += reports[i].pages_skipped;
        out.report.skipped_web_ids.insert(out.report.skipped_web_ids.end(), reports[i].skipped_web_ids.begin(),
                                          reports[i].skipped_web_ids.end());
    }
    if (out.report.pages_skipped > 0) {
        spdlog::warn("skipped {} of {} pages with empty text (first: {})", out.report.pages_skipped,
                     out.report.pages_captured, out.report.skipped_web_ids.front());
    }
    return out;
}

// Usable pages of a query; the rest are recorded in the report.
std::vector<const WebPage*> usable_pages(std::span<const WebPage> pages, BuildReport& report) {
    std::vector<const WebPage*> out;
    for (const WebPage& p : pages) {
        ++report.pages_captured;
        if (usable(p)) {
            out.push_back(&p);
        } else {
            ++report.pages_skipped;
            report.skipped_web_ids.push_back(p.web_id);
        }
    }
    return out;
}

std::vector<Dataset1ARow> query_rows_1a(const std::string& query_id, std::span<const WebPage> pages,
                                        std::span<const ResponseSentence> sentences, const PipelineContext& ctx,
                                        BuildReport& report) {
    const std::vector<const WebPage*> used = usable_pages(pages, report);
    std::vector<std::vector<Chunk>> chunks(used.size());
    std::vector<std::vector<EmbeddingVector>> embeddings(used.size());
    for (std::size_t k = 0; k < used.size(); ++k) {
        chunks[k] = segment_chars(used[k]->full_text, ctx.config.chunk_len_chars, used[k]->web_id);
        std::vector<std::string> texts;
        texts.reserve(chunks[k].size());
        for (const Chunk& c : chunks[k]) texts.push_back(c.text);
        embeddings[k] = ctx.embedder.embed_batch(texts);
    }
    FeatureCache cache(ctx.extractor);
    std::vector<Dataset1ARow> rows;
    rows.reserve(sentences.size() * used.size());
    for (const ResponseSentence& s : sentences) {
        const EmbeddingVector focal = ctx.embedder.embed(s.text);
        for (std::size_t k = 0; k < used.size(); ++k) {
            const ChunkSelection sel = select_by_similarity(chunks[k], embeddings[k], focal, s.text);
            Dataset1ARow row;
            row.query_id = query_id;
            row.sentence_idx = s.sentence_idx;
            row.web_id = used[k]->web_id;
            row.chunk_idx = sel.chunk_idx;
            row.score = sel.score;
            row.cited = std::binary_search(s.cited_web_ids.begin(), s.cited_web_ids.end(), row.web_id) ? 1 : 0;
            try {
                row.features = cache.get(chunks[k][static_cast<std::size_t>(sel.chunk_idx)].text);
            } catch (const Error& e) {
                throw ValidationError(page_context(*used[k]) + ": " + e.what());
            }
            row.focal = s.text;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

}  // namespace

std::vector<Dataset1ARow> featurize_query_1a(const std::string& query_id, std::span<const WebPage> pages,
                                             std::span<const ResponseSentence> sentences,
                                             const PipelineContext& ctx) {
    BuildReport report;
    return query_rows_1a(query_id, pages, sentences, ctx, report);
}

Dataset<Dataset1ARow> build_dataset_1a(const Corpus& corpus, const PipelineContext& ctx) {
    return run_per_query<Dataset1ARow>(corpus, ctx, [&](const Query& q, BuildReport& report) {
        const ChatResponse* r = corpus.response(q.query_id);
        if (!r) return std::vector<Dataset1ARow>{};
        std::vector<ResponseSentence> citing;
        for (const ResponseSentence& s : r->sentences) {
            if (!s.cited_web_ids.empty()) citing.push_back(s);
        }
        return query_rows_1a(q.query_id, corpus.pages_for(q.query_id), citing, ctx, report);
    });
}

Dataset<Dataset1BRow> build_dataset_1b(const Corpus& corpus, const PipelineContext& ctx) {
    return run_per_query<Dataset1BRow>(corpus, ctx, [&](const Query& q, BuildReport& report) {
        std::vector<WebPage> listed;
        for (const WebPage& p : corpus.pages_for(q.query_id)) {
            if (!p.listed) continue;
            if (!p.excerpt || text::trim(*p.excerpt).empty()) {
                throw ValidationError("listed web page " + p.web_id + " has no excerpt");
            }
            listed.push_back(p);
        }
        FeatureCache cache(ctx.extractor);
        std::vector<Dataset1BRow> rows;
        for (const WebPage* p : usable_pages(listed, report)) {
            const std::vector<Chunk> chunks = segment_chars(p->full_text, ctx.config.chunk_len_chars, p->web_id);
            const ChunkSelection sel = match_excerpt(chunks, *p->excerpt);
            Dataset1BRow row;
            row.query_id = q.query_id;
            row.web_id = p->web_id;
            row.chunk_idx = sel.chunk_idx;
            row.score = sel.score;
            row.rank = *p->rank;
            try {
                row.features = cache.get(chunks[static_cast<std::size_t>(sel.chunk_idx)].text);
            } catch (const Error& e) {
                throw ValidationError(page_context(*p) + ": " + e.what());
            }
            row.focal = *p->excerpt;
            rows.push_back(std::move(row));
        }
        return rows;
    });
}

Dataset<Dataset2Row> build_dataset_2(const Corpus& corpus, const PipelineContext& ctx) {
    return run_per_query<Dataset2Row>(corpus, ctx, [&](const Query& q, BuildReport& report) {
        const ChatResponse* response = corpus.response(q.query_id);
        std::map<std::string, std::vector<std::string>> citing;
        if (response) {
            for (const ResponseSentence& s : response->sentences) {
                for (const std::string& id : s.cited_web_ids) citing[id].push_back(s.text);
            }
        }
        FeatureCache cache(ctx.extractor);
        std::vector<Dataset2Row> rows;
        for (const WebPage* p : usable_pages(corpus.pages_for(q.query_id), report)) {
            const std::vector<Chunk> chunks = segment_tokens(p->full_text, ctx.config.chunk_len_tokens, p->web_id);
            ChunkSelection sel;
            if (p->listed) {
                if (!p->excerpt || text::trim(*p->excerpt).empty()) {
                    throw ValidationError("listed web page " + p->web_id + " has no excerpt");
                }
                sel = match_excerpt(chunks, *p->excerpt);
            } else {
                const auto it = citing.find(p->web_id);
                if (it == citing.end()) {
                    throw ValidationError("unlisted web page " + p->web_id +
                                          " is never cited, so it has no focal sentence");
                }
                const std::string merged = merge_focal_sentences(it->second);
                sel = select_by_similarity(chunks, ctx.embedder.embed(merged), ctx.embedder, merged);
            }
            Dataset2Row row;
            row.query_id = q.query_id;
            row.web_id = p->web_id;
            row.chunk_idx = sel.chunk_idx;
            row.score = sel.score;
            row.method = sel.method;
            row.chunk_text = chunks[static_cast<std::size_t>(sel.chunk_idx)].text;
            try {
                row.features = cache.get(row.chunk_text);
            } catch (const Error& e) {
                throw ValidationError(page_context(*p) + ": " + e.what());
            }
            row.focal = std::move(sel.focal);
            rows.push_back(std::move(row));
        }
        return rows;
    });
}

// ------------------------------------------------------------ citations

namespace {

std::vector<std::string> read_header(csv::Reader& reader, const std::vector<std::string>& expected) {
    const auto header = reader.next();
    if (!header || *header != expected) {
        std::string joined;
        for (const auto& e : expected) joined += (joined.empty() ? "" : ",") + e;
        throw ParseError(1, "expected header " + joined);
    }
    return *header;
}

int parse_flag(const std::string& field, std::size_t line, std::string_view column) {
    const long long v = csv::parse_int(field, line, column);
    if (v != 0 && v != 1) throw ParseError(line, std::string(column) + " must be 0 or 1");
    return static_cast<int>(v);
}

}  // namespace

CitationMap load_citations(std::istream& in) {
    csv::Reader reader(in);
    read_header(reader, {"query_id", "web_id", "cited"});
    CitationMap out;
    while (const auto row = reader.next()) {
        const std::size_t line = reader.line();
        if (row->size() != 3) throw ParseError(line, "expected 3 columns");
        const int cited = parse_flag((*row)[2], line, "cited");
        if (!out.emplace(std::make_pair((*row)[0], (*row)[1]), cited).second) {
            throw ParseError(line, "duplicate citation row for " + (*row)[0] + "/" + (*row)[1]);
        }
    }
    return out;
}

void write_citations(std::ostream& out, const CitationMap& citations) {
    csv::write_row(out, {"query_id", "web_id", "cited"});
    for (const auto& [key, cited] : citations) csv::write_row(out, {key.first, key.second, std::to_string(cited)});
}

std::size_t apply_citations(std::span<Dataset2Row> rows, const CitationMap& citations) {
    std::size_t unset = 0;
    for (Dataset2Row& r : rows) {
        const auto it = citations.find({r.query_id, r.web_id});
        if (it != citations.end()) {
            r.cited = it->second;
        } else if (!r.cited) {
            ++unset;
        }
    }
    return unset;
}

// ------------------------------------------------------------ dataset CSVs

namespace {

void append_features(std::vector<std::string>& fields, const FeatureVector& f) {
    for (double v : f.regressors()) fields.push_back(csv::format_double(v));
}

std::vector<std::string> header_with(std::vector<std::string> head) {
    for (auto name : kFeatureNames) head.emplace_back(name);
    return head;
}

FeatureVector parse_features(const std::vector<std::string>& row, std::size_t first, std::size_t line) {
    std::array<double, 7> v{};
    for (std::size_t j = 0; j < 7; ++j) v[j] = csv::parse_double(row[first + j], line, kFeatureNames[j]);
    FeatureVector f;
    f.readability = v[0];
    f.analytic = v[1];
    f.certitude = v[2];
    f.subjectivity = v[3];
    f.polarity = v[4];
    f.conversation = v[5];
    f.perplexity = v[6];
    f.perplexity_exp = std::exp(v[6]);
    return f;
}

template <typename Row, typename Parse>
std::vector<Row> read_rows(std::istream& in, const std::vector<std::string>& header, Parse parse) {
    csv::Reader reader(in);
    read_header(reader, header);
    std::vector<Row> rows;
    while (const auto row = reader.next()) {
        const std::size_t line = reader.line();
        if (row->size() != header.size()) {
            throw ParseError(line, fmt::format("expected {} columns, found {}", header.size(), row->size()));
        }
        rows.push_back(parse(*row, line));
    }
    return rows;
}

}  // namespace

void write_dataset(std::ostream& out, std::span<const Dataset1ARow> rows) {
    csv::write_row(out, header_with({"query_id", "sentence_idx", "web_id", "cited"}));
    for (const auto& r : rows) {
        std::vector<std::string> f{r.query_id, std::to_string(r.sentence_idx), r.web_id, std::to_string(r.cited)};
        append_features(f, r.features);
        csv::write_row(out, f);
    }
}

void write_dataset(std::ostream& out, std::span<const Dataset1BRow> rows) {
    csv::write_row(out, header_with({"query_id", "web_id", "rank"}));
    for (const auto& r : rows) {
        std::vector<std::string> f{r.query_id, r.web_id, std::to_string(r.rank)};
        append_features(f, r.features);
        csv::write_row(out, f);
    }
}

void write_dataset(std::ostream& out, std::span<const Dataset2Row> rows) {
    csv::write_row(out, header_with({"query_id", "web_id", "cited"}));
    for (const auto& r : rows) {
        std::vector<std::string> f{r.query_id, r.web_id, r.cited ? std::to_string(*r.cited) : std::string()};
        append_features(f, r.features);
        csv::write_row(out, f);
    }
}

std::vector<Dataset1ARow> read_dataset_1a(std::istream& in) {
    return read_rows<Dataset1ARow>(in, header_with({"query_id", "sentence_idx", "web_id", "cited"}),
                                   [](const std::vector<std::string>& row, std::size_t line) {
                                       Dataset1ARow r;
                                       r.query_id = row[0];
                                       r.sentence_idx = static_cast<int>(csv::parse_int(row[1], line, "sentence_idx"));
                                       r.web_id = row[2];
                                       r.cited = parse_flag(row[3], line, "cited");
                                       r.features = parse_features(row, 4, line);
                                       return r;
                                   });
}

std::vector<Dataset1BRow> read_dataset_1b(std::istream& in) {
    return read_rows<Dataset1BRow>(in, header_with({"query_id", "web_id", "rank"}),
                                   [](const std::vector<std::string>& row, std::size_t line) {
                                       Dataset1BRow r;
                                       r.query_id = row[0];
                                       r.web_id = row[1];
                                       const long long rank = csv::parse_int(row[2], line, "rank");
                                       if (rank < 1 || rank > kMaxRank) {
                                           throw ParseError(line, "rank outside 1.." + std::to_string(kMaxRank));
                                       }
                                       r.rank = static_cast<int>(rank);
                                       r.features = parse_features(row, 3, line);
                                       return r;
                                   });
}

std::vector<Dataset2Row> read_dataset_2(std::istream& in) {
    return read_rows<Dataset2Row>(in, header_with({"query_id", "web_id", "cited"}),
                                  [](const std::vector<std::string>& row, std::size_t line) {
                                      Dataset2Row r;
                                      r.query_id = row[0];
                                      r.web_id = row[1];
                                      if (!row[2].empty()) r.cited = parse_flag(row[2], line, "cited");
                                      r.features = parse_features(row, 3, line);
                                      return r;
                                  });
}

namespace {

template <typename Row>
void selection_log(std::ostream& out, std::span<const Row> rows, SelectionMethod method) {
    write_selection_log_header(out);
    for (const Row& r : rows) {
        SelectionMethod m = method;
        if constexpr (std::is_same_v<Row, Dataset2Row>) m = r.method;
        write_selection_log_row(out, r.query_id, ChunkSelection{r.web_id, r.chunk_idx, r.score, m, r.focal});
    }
}

}  // namespace

void write_selection_log(std::ostream& out, std::span<const Dataset1ARow> rows) {
    selection_log(out, rows, SelectionMethod::similarity_argmax);
}
void write_selection_log(std::ostream& out, std::span<const Dataset1BRow> rows) {
    selection_log(out, rows, SelectionMethod::lcs_match);
}
void write_selection_log(std::ostream& out, std::span<const Dataset2Row> rows) {
    selection_log(out, rows, SelectionMethod::lcs_match);
}

// ------------------------------------------------------------ analyses

namespace {

DesignMatrix feature_design(std::span<const FeatureVector> features, bool intercept) {
    std::vector<std::vector<double>> columns(7, std::vector<double>(features.size()));
    for (std::size_t i = 0; i < features.size(); ++i) {
        const auto v = features[i].regressors();
        for (std::size_t j = 0; j < 7; ++j) columns[j][i] = v[j];
    }
    return DesignMatrix::from_columns({kFeatureLabels.begin(), kFeatureLabels.end()}, columns, intercept);
}

std::vector<std::string> feature_term_order(bool intercept) {
    std::vector<std::string> order(kFeatureLabels.begin(), kFeatureLabels.end());
    if (intercept) order.emplace_back(kInterceptName);
    return order;
}

template <typename Fit, typename F>
void attempt(std::optional<Fit>& slot, std::map<Family, std::string>& errors, Family family, F&& fit) {
    try {
        slot = fit();
    } catch (const Error& e) {
        errors[family] = fmt::format("{} ({})", e.what(), category_name(e.category()));
        spdlog::warn("{} fit failed: {}", family_name(family), e.what());
    }
}

}  // namespace

CitationAnalysis run_citation_analysis(std::span<const FeatureVector> features, std::span<const double> outcome,
                                       const FitOptions& options) {
    if (features.size() != outcome.size()) throw ValidationError("features and outcome differ in length");
    CitationAnalysis a;
    a.n = features.size();
    const bool one_class = std::all_of(outcome.begin(), outcome.end(), [&](double v) { return v == outcome[0]; });
    std::optional<DesignMatrix> X;
    std::string problem;
    if (features.empty()) {
        problem = "no observations";
    } else if (one_class) {
        problem = "outcome takes a single value";
    } else {
        try {
            X = feature_design(features, true);
        } catch (const Error& e) {
            problem = e.what();
        }
    }
    if (!problem.empty()) {
        for (Family f : {Family::ols, Family::logit, Family::probit}) {
            a.errors[f] = problem + " (" + std::string(category_name(ErrorCategory::validation)) + ")";
        }
        return a;
    }
    const Eigen::Map<const Eigen::VectorXd> y(outcome.data(), static_cast<Eigen::Index>(outcome.size()));
    attempt(a.ols, a.errors, Family::ols, [&] { return fit_ols(*X, y, options); });
    attempt(a.logit, a.errors, Family::logit, [&] { return fit_binary(*X, y, Link::logit, options); });
    attempt(a.probit, a.errors, Family::probit, [&] { return fit_binary(*X, y, Link::probit, options); });
    return a;
}

CitationAnalysis run_citation_analysis(std::span<const Dataset1ARow> rows, const FitOptions& options) {
    std::vector<FeatureVector> x;
    std::vector<double> y;
    x.reserve(rows.size());
    y.reserve(rows.size());
    for (const auto& r : rows) {
        x.push_back(r.features);
        y.push_back(r.cited);
    }
    return run_citation_analysis(x, y, options);
}

CitationAnalysis run_citation_analysis(std::span<const Dataset2Row> rows, const FitOptions& options) {
    std::vector<FeatureVector> x;
    std::vector<double> y;
    x.reserve(rows.size());
    y.reserve(rows.size());
    for (const auto& r : rows) {
        if (!r.cited) throw ValidationError("row " + r.query_id + "/" + r.web_id + " has no cited flag");
        x.push_back(r.features);
        y.push_back(*r.cited);
    }
    return run_citation_analysis(x, y, options);
}

RankingAnalysis run_ranking_analysis(std::span<const Dataset1BRow> rows, const FitOptions& options) {
    RankingAnalysis a;
    a.n = rows.size();
    std::vector<FeatureVector> x;
    std::vector<int> y;
    for (const auto& r : rows) {
        x.push_back(r.features);
        y.push_back(r.rank);
    }
    std::optional<DesignMatrix> X;
    std::string problem;
    if (rows.empty()) {
        problem = "no observations";
    } else if (std::all_of(y.begin(), y.end(), [&](int v) { return v == y[0]; })) {
        problem = "only one rank category observed";
    } else {
        try {
            X = feature_design(x, false);
        } catch (const Error& e) {
            problem = e.what();
        }
    }
    if (!problem.empty()) {
        for (Family f : {Family::ordered_logit, Family::ordered_probit}) {
            a.errors[f] = problem + " (" + std::string(category_name(ErrorCategory::validation)) + ")";
        }
        return a;
    }
    attempt(a.ordered_logit, a.errors, Family::ordered_logit, [&] { return fit_ordered(*X, y, Link::logit, options); });
    attempt(a.ordered_probit, a.errors, Family::ordered_probit,
            [&] { return fit_ordered(*X, y, Link::probit, options); });
    return a;
}

namespace {

std::string failure_lines(const std::map<Family, std::string>& errors) {
    std::string out;
    for (const auto& [family, msg] : errors) out += fmt::format("{}: not estimated: {}\n", family_name(family), msg);
    return out;
}

template <typename Fit>
void add_column(std::vector<TableColumn>& cols, const char* title, const std::optional<Fit>& fit) {
    if (fit) cols.push_back({title, coefficient_rows(*fit), fit->n});
}

template <typename Fit>
void csv_rows(std::ostream& out, const std::optional<Fit>& fit) {
    if (!fit) return;
    for (const CoefficientRow& r : coefficient_rows(*fit)) {
        csv::write_row(out, {std::string(family_name(fit->family)), r.term, csv::format_double(r.estimate),
                             csv::format_double(r.se), csv::format_double(r.stat), csv::format_double(r.p),
                             std::string(significance_stars(r.p))});
    }
}

void analysis_csv_header(std::ostream& out) {
    csv::write_row(out, {"model", "term", "estimate", "robust_se", "stat", "p", "stars"});
}

}  // namespace

std::string render_citation_analysis(const CitationAnalysis& a, std::string_view caption) {
    std::vector<TableColumn> cols;
    add_column(cols, "OLS", a.ols);
    add_column(cols, "Logistic", a.logit);
    add_column(cols, "Probit", a.probit);
    std::string out;
    if (!cols.empty()) out = render_regression_table(caption, cols, feature_term_order(true));
    return out + failure_lines(a.errors);
}

std::string render_ranking_analysis(const RankingAnalysis& a, std::string_view caption) {
    std::vector<TableColumn> cols;
    add_column(cols, "Ordered Logit", a.ordered_logit);
    add_column(cols, "Ordered Probit", a.ordered_probit);
    std::string out;
    if (!cols.empty()) out = render_regression_table(caption, cols, feature_term_order(false));
    return out + std::string(kRankNote) + "\n" + failure_lines(a.errors);
}

void write_analysis_csv(std::ostream& out, const CitationAnalysis& a) {
    analysis_csv_header(out);
    csv_rows(out, a.ols);
    csv_rows(out, a.logit);
    csv_rows(out, a.probit);
}

void write_analysis_csv(std::ostream& out, const RankingAnalysis& a) {
    analysis_csv_header(out);
    csv_rows(out, a.ordered_logit);
    csv_rows(out, a.ordered_probit);
}

// ------------------------------------------------------------ diversity

DiversityAnalysis run_diversity_analysis(const Corpus& corpus, std::span<const Dataset2Row> rows,
                                         const Embedder& embedder) {
    std::map<std::string, std::vector<const Dataset2Row*>> by_query;
    for (const Dataset2Row& r : rows) {
        if (!r.cited) throw ValidationError("diversity analysis needs cited flags; " + r.web_id + " has none");
        by_query[r.query_id].push_back(&r);
    }
    DiversityAnalysis out;
    for (const Query& q : corpus.queries()) {
        const auto it = by_query.find(q.query_id);
        std::vector<const Dataset2Row*> cited, listed;
        if (it != by_query.end()) {
            for (const Dataset2Row* r : it->second) {
                if (*r->cited == 1) cited.push_back(r);
                if (corpus.page(r->web_id).listed) listed.push_back(r);
            }
        }
        if (cited.size() < 2) {
            ++out.excluded_few_citations;
            continue;
        }
        std::sort(listed.begin(), listed.end(), [&](const Dataset2Row* a, const Dataset2Row* b) {
            return std::make_pair(*corpus.page(a->web_id).rank, a->web_id) <
                   std::make_pair(*corpus.page(b->web_id).rank, b->web_id);
        });
        if (listed.size() > cited.size()) listed.resize(cited.size());
        if (listed.size() < 2) {
            ++out.excluded_few_listed;
            continue;
        }
        auto similarity = [&](const std::vector<const Dataset2Row*>& group) {
            std::vector<EmbeddingVector> v;
            v.reserve(group.size());
            for (const Dataset2Row* r : group) v.push_back(embedder.embed(r->chunk_text));
            return mean_pairwise_similarity(v);
        };
        out.records.push_back({q.query_id, cited.size(), similarity(cited), similarity(listed)});
    }
    if (out.records.size() >= 2) {
        std::vector<double> a, b;
        for (const auto& r : out.records) {
            a.push_back(r.sim_cited);
            b.push_back(r.sim_top_ranked);
        }
        const bool constant_a = std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; });
        const bool constant_b = std::all_of(b.begin(), b.end(), [&](double v) { return v == b[0]; });
        if (constant_a && constant_b && a[0] == b[0]) {
            TTestResult t;
            t.t = 0.0;
            t.p = 1.0;
            t.df = static_cast<double>(a.size() + b.size() - 2);
            t.mean_a = a[0];
            t.mean_b = b[0];
            t.n_a = a.size();
            t.n_b = b.size();
            out.ttest = t;
        } else {
            out.ttest = welch_t_test(a, b);
        }
    }
    return out;
}

void write_diversity_csv(std::ostream& out, const DiversityAnalysis& a) {
    csv::write_row(out, {"query_id", "n_cited", "sim_cited", "sim_top_ranked"});
    for (const auto& r : a.records) {
        csv::write_row(out, {r.query_id, std::to_string(r.n_cited), csv::format_double(r.sim_cited),
                             csv::format_double(r.sim_top_ranked)});
    }
}

std::string render_diversity_analysis(const DiversityAnalysis& a) {
    std::string out = "Citation-set diversity\n";
    out += fmt::format("Queries compared: {}\n", a.records.size());
    out += fmt::format("Excluded (fewer than 2 cited pages): {}\n", a.excluded_few_citations);
    out += fmt::format("Excluded (fewer than 2 listed pages): {}\n", a.excluded_few_listed);
    if (a.ttest) {
        const TTestResult& t = *a.ttest;
        out += fmt::format("Cited pages:      mean similarity {:.3f} (sd {:.3f})\n", t.mean_a, t.sd_a);
        out += fmt::format("Top-ranked pages: mean similarity {:.3f} (sd {:.3f})\n", t.mean_b, t.sd_b);
        out += fmt::format("Welch t = {:.2f}, df = {:.1f}, p = {:.4g} {}\n", t.t, t.df, t.p, significance_stars(t.p));
    } else {
        out += "Too few queries for a t-test.\n";
    }
    return out;
}

// ------------------------------------------------------------ summaries

namespace {

template <typename Row, typename Outcome>
SummaryTable summary_of(std::span<const Row> rows, const std::string& outcome_name, Outcome outcome) {
    if (rows.empty()) throw ValidationError("cannot summarize an empty dataset");
    std::vector<double> y;
    std::array<std::vector<double>, 7> x;
    for (const Row& r : rows) {
        if (const std::optional<double> v = outcome(r)) y.push_back(*v);
        const auto f = r.features.regressors();
        for (std::size_t j = 0; j < 7; ++j) x[j].push_back(f[j]);
    }
    SummaryTable t;
    if (!y.empty()) t.push_back(summarize(outcome_name, y));
    for (std::size_t j = 0; j < 7; ++j) t.push_back(summarize(std::string(kFeatureLabels[j]), x[j]));
    return t;
}

}  // namespace

SummaryTable dataset_summary(std::span<const Dataset1ARow> rows) {
    return summary_of(rows, "Cited", [](const Dataset1ARow& r) { return std::optional<double>(r.cited); });
}

SummaryTable dataset_summary(std::span<const Dataset1BRow> rows) {
    return summary_of(rows, "Rank", [](const Dataset1BRow& r) { return std::optional<double>(r.rank); });
}

SummaryTable dataset_summary(std::span<const Dataset2Row> rows) {
    return summary_of(rows, "Cited", [](const Dataset2Row& r) {
        return r.cited ? std::optional<double>(*r.cited) : std::nullopt;
    });
}

std::shared_ptr<NGramLM> train_corpus_lm(const Corpus& corpus, const NGramOptions& options) {
    std::vector<std::string> texts;
    texts.reserve(corpus.pages().size());
    for (const WebPage& p : corpus.pages()) {
        if (usable(p)) texts.push_back(p.full_text);
    }
    return std::make_shared<NGramLM>(NGramLM::train_texts(texts, options));
}

}  // namespace citecrit
