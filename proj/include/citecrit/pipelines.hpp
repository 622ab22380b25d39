#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "citecrit/chunking.hpp"
#include "citecrit/corpus.hpp"
#include "citecrit/econometrics.hpp"
#include "citecrit/embedding.hpp"
#include "citecrit/language_model.hpp"
#include "citecrit/summary.hpp"
#include "citecrit/textfeatures.hpp"

namespace citecrit {

struct PipelineConfig {
    std::size_t chunk_len_chars = 128;   // datasets 1A and 1B
    std::size_t chunk_len_tokens = 128;  // dataset 2
    /// 0 means one worker per hardware thread.
    std::size_t workers = 1;
};

/// Everything the builders need besides the corpus. Both handles must be
/// safe for concurrent use.
struct PipelineContext {
    const Embedder& embedder;
    const FeatureExtractor& extractor;
    PipelineConfig config;
};

struct Dataset1ARow {
    std::string query_id;
    int sentence_idx = 0;
    std::string web_id;
    int chunk_idx = -1;  // -1 when read back from a dataset CSV
    double score = 0.0;
    int cited = 0;
    FeatureVector features;
    std::string focal;  // sentence text
};

struct Dataset1BRow {
    std::string query_id;
    std::string web_id;
    int chunk_idx = -1;
    double score = 0.0;
    int rank = 0;
    FeatureVector features;
    std::string focal;  // excerpt
};

struct Dataset2Row {
    std::string query_id;
    std::string web_id;
    int chunk_idx = -1;
    double score = 0.0;
    SelectionMethod method = SelectionMethod::lcs_match;
    std::string chunk_text;
    std::optional<int> cited;  // unset until citations are applied
    FeatureVector features;
    std::string focal;  // excerpt or merged citing sentences
};

/// Pages that could not be used (empty extracted text).
struct BuildReport {
    std::size_t pages_captured = 0;
    std::size_t pages_skipped = 0;
    std::vector<std::string> skipped_web_ids;
};

template <typename Row>
struct Dataset {
    std::vector<Row> rows;
    BuildReport report;
};

/// Runs fn(0..n-1) on up to `workers` threads. If any call throws, the
/// exception from the lowest index is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

/// Dataset 1A rows for one query: every page against every given sentence,
/// each page's chunk picked by similarity to the sentence. The cited flag
/// comes from the sentence's cited_web_ids. Rows are ordered by
/// (sentence_idx, web_id). Pages with empty text are skipped.
std::vector<Dataset1ARow> featurize_query_1a(const std::string& query_id, std::span<const WebPage> pages,
                                             std::span<const ResponseSentence> sentences,
                                             const PipelineContext& ctx);

/// One row per (citing sentence, page) for every query with a response.
Dataset<Dataset1ARow> build_dataset_1a(const Corpus& corpus, const PipelineContext& ctx);

/// One row per listed page, chunk picked by LCS against the excerpt. A
/// listed page without an excerpt is a ValidationError.
Dataset<Dataset1BRow> build_dataset_1b(const Corpus& corpus, const PipelineContext& ctx);

/// One row per page using token chunks. Listed pages match their excerpt;
/// unlisted pages use the merged text of every sentence citing them, and an
/// unlisted page no sentence cites is a ValidationError.
Dataset<Dataset2Row> build_dataset_2(const Corpus& corpus, const PipelineContext& ctx);

/// Outcome flags keyed by (query_id, web_id).
using CitationMap = std::map<std::pair<std::string, std::string>, int>;

/// CSV `query_id,web_id,cited`.
CitationMap load_citations(std::istream& in);
void write_citations(std::ostream& out, const CitationMap& citations);
/// Sets `cited` on every row found in the map and returns how many rows
/// were left unset.
std::size_t apply_citations(std::span<Dataset2Row> rows, const CitationMap& citations);

// Dataset CSVs: `query_id[,sentence_idx],web_id,cited|rank,<seven features>`.
// Chunk references are not part of these files; see write_selection_log.
void write_dataset(std::ostream& out, std::span<const Dataset1ARow> rows);
void write_dataset(std::ostream& out, std::span<const Dataset1BRow> rows);
void write_dataset(std::ostream& out, std::span<const Dataset2Row> rows);
std::vector<Dataset1ARow> read_dataset_1a(std::istream& in);
std::vector<Dataset1BRow> read_dataset_1b(std::istream& in);
std::vector<Dataset2Row> read_dataset_2(std::istream& in);

/// Selection log (`query_id,web_id,chunk_idx,method,score,focal_hash`) for
/// the rows of a freshly built dataset.
void write_selection_log(std::ostream& out, std::span<const Dataset1ARow> rows);
void write_selection_log(std::ostream& out, std::span<const Dataset1BRow> rows);
void write_selection_log(std::ostream& out, std::span<const Dataset2Row> rows);

/// OLS, logit and probit of the outcome on the seven features plus a
/// constant. A family that fails leaves its slot empty and records why.
struct CitationAnalysis {
    std::optional<FitResult> ols, logit, probit;
    std::map<Family, std::string> errors;
    std::size_t n = 0;
};

CitationAnalysis run_citation_analysis(std::span<const Dataset1ARow> rows, const FitOptions& options = {});
/// Every row must carry a cited flag.
CitationAnalysis run_citation_analysis(std::span<const Dataset2Row> rows, const FitOptions& options = {});
CitationAnalysis run_citation_analysis(std::span<const FeatureVector> features, std::span<const double> outcome,
                                       const FitOptions& options = {});

struct RankingAnalysis {
    std::optional<OrderedFitResult> ordered_logit, ordered_probit;
    std::map<Family, std::string> errors;
    std::size_t n = 0;
};

inline constexpr std::string_view kRankNote =
    "Note: a higher rank value is a lower position, so negative coefficients favour a better rank.";

RankingAnalysis run_ranking_analysis(std::span<const Dataset1BRow> rows, const FitOptions& options = {});

/// Fixed-width tables in regression-table layout, followed by one line per failed family.
std::string render_citation_analysis(const CitationAnalysis& analysis, std::string_view caption);
std::string render_ranking_analysis(const RankingAnalysis& analysis, std::string_view caption);
/// Coefficient CSVs for the families that succeeded, with a leading `model` column.
void write_analysis_csv(std::ostream& out, const CitationAnalysis& analysis);
void write_analysis_csv(std::ostream& out, const RankingAnalysis& analysis);

struct DiversityRecord {
    std::string query_id;
    std::size_t n_cited = 0;
    double sim_cited = 0.0;
    double sim_top_ranked = 0.0;
};

struct DiversityAnalysis {
    std::vector<DiversityRecord> records;
    std::size_t excluded_few_citations = 0;  // fewer than two cited pages
    std::size_t excluded_few_listed = 0;     // fewer than two listed pages to compare against
    std::optional<TTestResult> ttest;        // set when at least two records exist
};

/// Per query with N >= 2 cited pages: mean pairwise similarity of the cited
/// pages' chunks and of the chunks of the N best-ranked listed pages (rank,
/// then web_id). When fewer than N pages are listed, all of them are used.
/// The two samples are compared with a Welch test; if both samples are
/// constant and equal, t = 0 and p = 1.
DiversityAnalysis run_diversity_analysis(const Corpus& corpus, std::span<const Dataset2Row> rows,
                                         const Embedder& embedder);

void write_diversity_csv(std::ostream& out, const DiversityAnalysis& analysis);
std::string render_diversity_analysis(const DiversityAnalysis& analysis);

/// Outcome first, then the features in column order.
SummaryTable dataset_summary(std::span<const Dataset1ARow> rows);
SummaryTable dataset_summary(std::span<const Dataset1BRow> rows);
SummaryTable dataset_summary(std::span<const Dataset2Row> rows);

/// Trigram model over the full text of every page, the default source for
/// the perplexity feature.
std::shared_ptr<NGramLM> train_corpus_lm(const Corpus& corpus, const NGramOptions& options = {});

}  // namespace citecrit
