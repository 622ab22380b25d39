#include "citecrit/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "citecrit/error.hpp"
#include "citecrit/text.hpp"

namespace citecrit {

using nlohmann::json;
using nlohmann::ordered_json;

Corpus Corpus::build(std::vector<Query> queries, std::vector<WebPage> pages,
                     std::vector<ChatResponse> responses) {
    Corpus c;
    std::sort(queries.begin(), queries.end(),
              [](const Query& a, const Query& b) { return a.query_id < b.query_id; });
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const Query& q = queries[i];
        if (q.query_id.empty()) throw ValidationError("query with empty query_id");
        if (text::trim(q.text).empty()) throw ValidationError("query " + q.query_id + " has empty text");
        if (!c.query_index_.emplace(q.query_id, i).second) {
            throw ValidationError("duplicate query_id " + q.query_id);
        }
    }
    c.queries_ = std::move(queries);

    std::sort(pages.begin(), pages.end(), [](const WebPage& a, const WebPage& b) {
        return std::tie(a.query_id, a.web_id) < std::tie(b.query_id, b.web_id);
    });
    std::set<std::pair<std::string, std::string>> urls;
    for (std::size_t i = 0; i < pages.size(); ++i) {
        const WebPage& p = pages[i];
        if (p.web_id.empty()) throw ValidationError("web page with empty web_id");
        if (!c.query_index_.count(p.query_id)) {
            throw ValidationError("web page " + p.web_id + " references unknown query_id " + p.query_id);
        }
        if (!c.page_index_.emplace(p.web_id, i).second) {
            throw ValidationError("duplicate web_id " + p.web_id);
        }
        if (!urls.emplace(p.query_id, p.url).second) {
            throw ValidationError("duplicate url " + p.url + " for query " + p.query_id);
        }
        if (p.listed != p.rank.has_value()) {
            throw ValidationError("web page " + p.web_id + ": listed must be true exactly when rank is present");
        }
        if (p.rank && (*p.rank < 1 || *p.rank > kMaxRank)) {
            throw ValidationError("web page " + p.web_id + ": rank " + std::to_string(*p.rank) +
                                  " outside 1.." + std::to_string(kMaxRank));
        }
        if (p.excerpt && !p.listed) {
            throw ValidationError("web page " + p.web_id + ": excerpt present on an unlisted page");
        }
        auto [it, inserted] = c.page_ranges_.try_emplace(p.query_id, i, i + 1);
        if (!inserted) it->second.second = i + 1;
    }
    c.pages_ = std::move(pages);
    std::size_t gapped = 0;
    std::string first_gapped;
    for (const Query& q : c.queries_) {
        if (!c.page_ranges_.count(q.query_id)) {
            throw ValidationError("query " + q.query_id + " has no web pages");
        }
        std::vector<int> ranks;
        for (const WebPage& p : c.pages_for(q.query_id)) {
            if (p.rank) ranks.push_back(*p.rank);
        }
        std::sort(ranks.begin(), ranks.end());
        for (std::size_t r = 0; r < ranks.size(); ++r) {
            if (ranks[r] != static_cast<int>(r) + 1) {
                if (gapped++ == 0) first_gapped = q.query_id;
                break;
            }
        }
    }
    if (gapped > 0) {
        spdlog::warn("{} quer{} with listed ranks not contiguous from 1 (first: {})", gapped,
                     gapped == 1 ? "y" : "ies", first_gapped);
    }

    for (ChatResponse& r : responses) {
        if (!c.query_index_.count(r.query_id)) {
            throw ValidationError("response references unknown query_id " + r.query_id);
        }
        std::sort(r.sentences.begin(), r.sentences.end(),
                  [](const auto& a, const auto& b) { return a.sentence_idx < b.sentence_idx; });
        bool any_citation = false;
        for (std::size_t j = 0; j < r.sentences.size(); ++j) {
            ResponseSentence& s = r.sentences[j];
            if (s.sentence_idx != static_cast<int>(j)) {
                throw ValidationError("response for query " + r.query_id +
                                      ": sentence_idx values must be 0..n-1 without gaps or repeats");
            }
            std::sort(s.cited_web_ids.begin(), s.cited_web_ids.end());
            s.cited_web_ids.erase(std::unique(s.cited_web_ids.begin(), s.cited_web_ids.end()),
                                  s.cited_web_ids.end());
            for (const std::string& id : s.cited_web_ids) {
                const auto it = c.page_index_.find(id);
                if (it == c.page_index_.end()) {
                    throw ValidationError("response for query " + r.query_id + " cites unknown web_id " + id);
                }
                if (c.pages_[it->second].query_id != r.query_id) {
                    throw ValidationError("response for query " + r.query_id + " cites web_id " + id +
                                          " belonging to query " + c.pages_[it->second].query_id);
                }
            }
            any_citation = any_citation || !s.cited_web_ids.empty();
        }
        if (!any_citation) {
            throw ValidationError("response for query " + r.query_id + " has no sentence citing a web page");
        }
        const std::string id = r.query_id;
        if (!c.responses_.emplace(id, std::move(r)).second) {
            throw ValidationError("duplicate response for query " + id);
        }
    }
    return c;
}

std::span<const WebPage> Corpus::pages_for(const std::string& query_id) const {
    const auto it = page_ranges_.find(query_id);
    if (it == page_ranges_.end()) return {};
    return std::span<const WebPage>(pages_).subspan(it->second.first, it->second.second - it->second.first);
}

const WebPage& Corpus::page(const std::string& web_id) const {
    const auto it = page_index_.find(web_id);
    if (it == page_index_.end()) throw ValidationError("unknown web_id " + web_id);
    return pages_[it->second];
}

const Query& Corpus::query(const std::string& query_id) const {
    const auto it = query_index_.find(query_id);
    if (it == query_index_.end()) throw ValidationError("unknown query_id " + query_id);
    return queries_[it->second];
}

const ChatResponse* Corpus::response(const std::string& query_id) const {
    const auto it = responses_.find(query_id);
    return it == responses_.end() ? nullptr : &it->second;
}

namespace {

const json& require_field(const json& obj, const char* name, std::size_t line) {
    const auto it = obj.find(name);
    if (it == obj.end()) throw ParseError(line, std::string("missing field '") + name + "'");
    return *it;
}

std::string require_string(const json& obj, const char* name, std::size_t line) {
    const json& v = require_field(obj, name, line);
    if (!v.is_string()) throw ParseError(line, std::string("field '") + name + "' must be a string");
    return v.get<std::string>();
}

std::string tag_line(const std::string& msg, std::size_t line) {
    return msg + " (line " + std::to_string(line) + ")";
}

}  // namespace

Corpus load_capture(std::istream& in) {
    std::vector<Query> queries;
    std::vector<WebPage> pages;
    std::vector<ChatResponse> responses;
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        if (text::trim(raw).empty()) continue;
        json obj;
        try {
            obj = json::parse(raw);
        } catch (const json::parse_error& e) {
            throw ParseError(line, std::string("invalid JSON: ") + e.what());
        }
        if (!obj.is_object()) throw ParseError(line, "record must be a JSON object");
        const std::string kind = require_string(obj, "kind", line);
        if (kind == "query") {
            queries.push_back({require_string(obj, "query_id", line), require_string(obj, "text", line)});
        } else if (kind == "webpage") {
            WebPage p;
            p.web_id = require_string(obj, "web_id", line);
            p.query_id = require_string(obj, "query_id", line);
            p.url = require_string(obj, "url", line);
            p.full_text = require_string(obj, "full_text", line);
            const json& listed = require_field(obj, "listed", line);
            if (!listed.is_boolean()) throw ParseError(line, "field 'listed' must be a boolean");
            p.listed = listed.get<bool>();
            if (auto it = obj.find("rank"); it != obj.end() && !it->is_null()) {
                if (!it->is_number_integer()) throw ParseError(line, "field 'rank' must be an integer");
                const auto r = it->get<long long>();
                if (r < 1 || r > kMaxRank) {
                    throw ValidationError(tag_line("web page " + p.web_id + ": rank " + std::to_string(r) +
                                                       " outside 1.." + std::to_string(kMaxRank),
                                                   line));
                }
                p.rank = static_cast<int>(r);
            }
            if (auto it = obj.find("excerpt"); it != obj.end() && !it->is_null()) {
                if (!it->is_string()) throw ParseError(line, "field 'excerpt' must be a string");
                p.excerpt = it->get<std::string>();
            }
            pages.push_back(std::move(p));
        } else if (kind == "response") {
            ChatResponse r;
            r.query_id = require_string(obj, "query_id", line);
            const json& sentences = require_field(obj, "sentences", line);
            if (!sentences.is_array()) throw ParseError(line, "field 'sentences' must be an array");
            for (const json& s : sentences) {
                if (!s.is_object()) throw ParseError(line, "sentence must be an object");
                ResponseSentence rs;
                const json& idx = require_field(s, "sentence_idx", line);
                if (!idx.is_number_integer()) throw ParseError(line, "sentence_idx must be an integer");
                rs.sentence_idx = idx.get<int>();
                rs.text = require_string(s, "text", line);
                const json& cited = require_field(s, "cited_web_ids", line);
                if (!cited.is_array()) throw ParseError(line, "cited_web_ids must be an array");
                for (const json& id : cited) {
                    if (!id.is_string()) throw ParseError(line, "cited_web_ids entries must be strings");
                    rs.cited_web_ids.push_back(id.get<std::string>());
                }
                r.sentences.push_back(std::move(rs));
            }
            responses.push_back(std::move(r));
        } else {
            throw ParseError(line, "unknown record kind '" + kind + "'");
        }
    }
    if (in.bad()) throw IoError("read failure while loading capture");
    return Corpus::build(std::move(queries), std::move(pages), std::move(responses));
}

Corpus load_capture_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open capture file " + path);
    return load_capture(in);
}

void save_corpus(const Corpus& corpus, std::ostream& out) {
    for (const Query& q : corpus.queries()) {
        ordered_json qj;
        qj["kind"] = "query";
        qj["query_id"] = q.query_id;
        qj["text"] = q.text;
        out << qj.dump() << '\n';
        for (const WebPage& p : corpus.pages_for(q.query_id)) {
            ordered_json pj;
            pj["kind"] = "webpage";
            pj["web_id"] = p.web_id;
            pj["query_id"] = p.query_id;
            pj["url"] = p.url;
            pj["listed"] = p.listed;
            if (p.rank) pj["rank"] = *p.rank;
            if (p.excerpt) pj["excerpt"] = *p.excerpt;
            pj["full_text"] = p.full_text;
            out << pj.dump() << '\n';
        }
        if (const ChatResponse* r = corpus.response(q.query_id)) {
            ordered_json rj;
            rj["kind"] = "response";
            rj["query_id"] = r->query_id;
            rj["sentences"] = ordered_json::array();
            for (const ResponseSentence& s : r->sentences) {
                ordered_json sj;
                sj["sentence_idx"] = s.sentence_idx;
                sj["text"] = s.text;
                sj["cited_web_ids"] = s.cited_web_ids;
                rj["sentences"].push_back(std::move(sj));
            }
            out << rj.dump() << '\n';
        }
    }
    if (!out) throw IoError("write failure while saving corpus");
}

void save_corpus_file(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    save_corpus(corpus, out);
    out.flush();
    if (!out) throw IoError("write failure on " + path);
}

}  // namespace citecrit
