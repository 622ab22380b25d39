#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace citecrit {

struct Query {
    std::string query_id;
    std::string text;

    bool operator==(const Query&) const = default;
};

struct WebPage {
    std::string web_id;
    std::string query_id;
    std::string url;
    std::string full_text;
    std::optional<int> rank;
    bool listed = false;
    std::optional<std::string> excerpt;

    bool operator==(const WebPage&) const = default;
};

struct ResponseSentence {
    int sentence_idx = 0;
    std::string text;
    std::vector<std::string> cited_web_ids;  // sorted, unique

    bool operator==(const ResponseSentence&) const = default;
};

struct ChatResponse {
    std::string query_id;
    std::vector<ResponseSentence> sentences;  // ordered by sentence_idx

    bool operator==(const ChatResponse&) const = default;
};

constexpr int kMaxRank = 20;

/// Validated, immutable capture of search sessions. Queries are ordered by
/// query_id and each query's pages by web_id (byte-wise string order).
class Corpus {
public:
    Corpus() = default;

    /// Sorts, indexes and validates the records. Throws ValidationError on
    /// duplicate ids, dangling references, rank/listed/excerpt inconsistency,
    /// queries without pages, and responses without a citing sentence.
    static Corpus build(std::vector<Query> queries, std::vector<WebPage> pages,
                        std::vector<ChatResponse> responses);

    const std::vector<Query>& queries() const { return queries_; }
    const std::vector<WebPage>& pages() const { return pages_; }
    std::span<const WebPage> pages_for(const std::string& query_id) const;
    const WebPage& page(const std::string& web_id) const;
    const Query& query(const std::string& query_id) const;
    /// nullptr when the query has no captured response.
    const ChatResponse* response(const std::string& query_id) const;
    std::size_t response_count() const { return responses_.size(); }

    bool operator==(const Corpus& other) const {
        return queries_ == other.queries_ && pages_ == other.pages_ && responses_ == other.responses_;
    }

private:
    std::vector<Query> queries_;
    std::vector<WebPage> pages_;
    std::map<std::string, ChatResponse> responses_;
    std::map<std::string, std::size_t> query_index_;
    std::map<std::string, std::size_t> page_index_;
    std::map<std::string, std::pair<std::size_t, std::size_t>> page_ranges_;
};

/// Reads a JSONL capture (one object per line with `kind` query, webpage or
/// response). Record order is irrelevant. Blank lines are skipped.
Corpus load_capture(std::istream& in);
Corpus load_capture_file(const std::string& path);

/// Writes the canonical JSONL form: per query, its query record, its pages
/// by web_id, then its response.
void save_corpus(const Corpus& corpus, std::ostream& out);
void save_corpus_file(const Corpus& corpus, const std::string& path);

}  // namespace citecrit
