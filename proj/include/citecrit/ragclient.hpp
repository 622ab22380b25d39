#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "citecrit/net.hpp"
#include "citecrit/pipelines.hpp"

namespace citecrit::rag {

struct Segment {
    std::string web_id;
    std::string text;

    bool operator==(const Segment&) const = default;
};

/// Byte range [begin, end) of one segment body inside the rendered document.
struct SegmentSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::string web_id;
};

/// One query's retrieval source: every segment is preceded by a line
/// `⟦web:<id>⟧` and followed by a newline. A `⟦` inside segment text is
/// rendered as `⟦⟦`, so no body line can pass for a delimiter.
struct SourceDocument {
    std::string query_id;
    std::vector<Segment> segments;  // sorted by web_id
    std::string rendered;
    std::vector<SegmentSpan> index_map;

    /// web_id whose rendered body contains byte `offset`, if any.
    std::optional<std::string> web_id_at(std::size_t offset) const;
};

/// Segments are sorted by web_id. Throws ValidationError when there are no
/// segments, a web_id repeats, or a web_id cannot sit on a delimiter line.
SourceDocument assemble_document(std::string query_id, std::vector<Segment> segments);
/// Uses each row's selected chunk text. All rows must belong to `query_id`.
SourceDocument assemble_document(const std::string& query_id, std::span<const Dataset2Row> rows);

/// Inverse of rendering: the (web_id, text) pairs in document order.
/// Throws ParseError on text before the first delimiter.
std::vector<Segment> parse_document(std::string_view rendered);

struct Annotation {
    std::string marker;  // e.g. "【7†source】"; may be empty
    std::string quote;
    /// Byte range in the rendered document, when the service reports one.
    std::optional<std::pair<std::size_t, std::size_t>> span;
};

struct AnnotatedResponse {
    std::string query_id;
    std::string answer;
    std::vector<Annotation> annotations;
};

/// Marker syntax in answer text. Group 1 is the file index; the source
/// label is the last group.
struct MarkerGrammar {
    std::string pattern = "【(\\d+)(?::(\\d+))?†(.*?)】";
};

struct Marker {
    std::string text;
    std::size_t offset = 0;  // byte offset in the answer
    int index = 0;
};

std::vector<Marker> find_markers(std::string_view answer, const MarkerGrammar& grammar = {});

/// Reads a raw service body. Two shapes are accepted:
///   {"answer": str, "annotations": [{"marker", "quote", "start", "end"}]}
///   an assistant message {"content": [{"type": "text", "text": {"value": str,
///     "annotations": [{"text", "start_index", "end_index",
///                      "file_citation": {"quote": str}}]}}]}
/// In the second shape start_index/end_index locate the marker in the
/// answer, so they are not used as document spans. Throws ParseError.
AnnotatedResponse parse_response(std::string_view raw, const std::string& query_id);
std::string render_response(const AnnotatedResponse& response);

enum class ResolveMethod { span, containment, lcs };
std::string_view resolve_method_name(ResolveMethod method);

struct ResolvedAnnotation {
    std::size_t annotation = 0;  // index into response.annotations
    std::string web_id;
    ResolveMethod method = ResolveMethod::span;
    double score = 1.0;  // LCS / |quote| for the lcs method
};

struct UnresolvedAnnotation {
    std::size_t annotation = 0;
    std::string marker;
    std::string quote;
    std::string reason;
    double best_score = 0.0;
    std::vector<std::string> candidates;  // tied segments, when ambiguous
};

struct Resolution {
    std::string query_id;
    std::set<std::string> cited;
    std::vector<ResolvedAnnotation> resolved;
    std::vector<UnresolvedAnnotation> unresolved;
};

/// Each annotation goes to one web_id: by span when it falls inside one
/// segment body, else by exact containment of the quote in exactly one
/// segment, else by the segment with the longest case-folded LCS when that
/// reaches `lcs_threshold` times the quote length in code points. Quotes
/// contained in, or tied between, several segments are reported as
/// ambiguous. Throws ValidationError when the response is for another query.
Resolution resolve_annotations(const SourceDocument& doc, const AnnotatedResponse& response,
                               double lcs_threshold = 0.6);

/// 0/1 flag for every segment of `doc`.
void add_citations(CitationMap& out, const SourceDocument& doc, const Resolution& resolution);

/// CSV `query_id,annotation,marker,quote,reason,best_score,candidates`.
void write_unresolved(std::ostream& out, std::span<const Resolution> resolutions);

inline constexpr std::string_view kDefaultInstructions =
    "Answer the question using only the attached document. Quote the passages you rely on and mark each with "
    "a reference to the document.";

struct ServiceConfig {
    net::RetryPolicy retry;
    std::string instructions{kDefaultInstructions};
    MarkerGrammar grammar;
    std::size_t max_concurrent = 4;
    /// Minimum spacing between request starts; zero disables throttling.
    std::chrono::milliseconds min_interval{0};
};

/// Raw bodies are stored as `<dir>/<query_id>.<UTC timestamp>.json`. The
/// latest file of a query is the one used for replay.
class RawArchive {
public:
    explicit RawArchive(std::filesystem::path dir);
    std::filesystem::path store(const std::string& query_id, std::string_view raw) const;
    std::optional<std::filesystem::path> latest(const std::string& query_id) const;
    std::string load(const std::string& query_id) const;
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
};

std::string request_body(const SourceDocument& doc, std::string_view query_text, const ServiceConfig& config);

/// Posts one request with retries, archives the raw body, then parses it.
/// A body that does not parse stays in the archive and the ParseError
/// propagates.
AnnotatedResponse submit(const SourceDocument& doc, std::string_view query_text, const net::JsonTransport& transport,
                         const ServiceConfig& config, const RawArchive& archive);

/// Parses the archived body of the query; no network.
AnnotatedResponse replay(const SourceDocument& doc, const RawArchive& archive);

struct CollectItem {
    SourceDocument doc;
    std::string query_text;
};

struct CollectResult {
    CitationMap citations;
    std::vector<Resolution> resolutions;
    std::size_t requests = 0;
};

/// Submits (or, with `replay_only`, replays) every item, up to
/// config.max_concurrent at a time, and resolves the annotations. Results
/// are in item order whatever the completion order.
CollectResult collect(std::span<const CollectItem> items, const net::JsonTransport* transport,
                      const ServiceConfig& config, const RawArchive& archive, bool replay_only,
                      double lcs_threshold = 0.6);

/// Groups dataset 2 rows by query into documents, in query_id order.
std::vector<SourceDocument> documents_from_rows(std::span<const Dataset2Row> rows);

}  // namespace citecrit::rag
