#include "citecrit/ragclient.hpp"

#include <algorithm>
#include <atomic>
#include <ctime>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "citecrit/chunking.hpp"
#include "citecrit/csv.hpp"
#include "citecrit/error.hpp"
#include "citecrit/text.hpp"

namespace citecrit::rag {

namespace {

constexpr std::string_view kOpen = "⟦";
constexpr std::string_view kClose = "⟧";
constexpr std::string_view kDelimiterPrefix = "⟦web:";

std::string replace_all(std::string_view s, std::string_view from, std::string_view to) {
    std::string out;
    std::size_t pos = 0;
    for (;;) {
        const std::size_t hit = s.find(from, pos);
        if (hit == std::string_view::npos) break;
        out.append(s.substr(pos, hit - pos));
        out.append(to);
        pos = hit + from.size();
    }
    out.append(s.substr(pos));
    return out;
}

std::string escape_body(std::string_view text) { return replace_all(text, kOpen, std::string(kOpen) + std::string(kOpen)); }

std::string unescape_body(std::string_view text) {
    return replace_all(text, std::string(kOpen) + std::string(kOpen), kOpen);
}

std::optional<std::string_view> delimiter_id(std::string_view line) {
    if (!line.starts_with(kDelimiterPrefix) || !line.ends_with(kClose)) return std::nullopt;
    if (line.size() < kDelimiterPrefix.size() + kClose.size()) return std::nullopt;
    return line.substr(kDelimiterPrefix.size(), line.size() - kDelimiterPrefix.size() - kClose.size());
}

void check_web_id(const std::string& id) {
    if (id.empty() || id.find('\n') != std::string::npos || id.find('\r') != std::string::npos ||
        id.find(kClose) != std::string::npos) {
        throw ValidationError(fmt::format("web_id '{}' cannot be written on a delimiter line", id));
    }
}

// Ellipses mark omitted text, so they cannot be matched against the source.
std::string quote_for_matching(std::string_view quote) {
    std::string q = replace_all(quote, "…", " ");
    q = replace_all(q, "...", " ");
    return text::normalize_space(q);
}

}  // namespace

std::optional<std::string> SourceDocument::web_id_at(std::size_t offset) const {
    const auto it = std::upper_bound(index_map.begin(), index_map.end(), offset,
                                     [](std::size_t o, const SegmentSpan& s) { return o < s.begin; });
    if (it == index_map.begin()) return std::nullopt;
    const SegmentSpan& s = *std::prev(it);
    if (offset < s.end) return s.web_id;
    return std::nullopt;
}

SourceDocument assemble_document(std::string query_id, std::vector<Segment> segments) {
    if (segments.empty()) throw ValidationError(fmt::format("query {}: no segments to assemble", query_id));
    std::sort(segments.begin(), segments.end(),
              [](const Segment& a, const Segment& b) { return a.web_id < b.web_id; });
    for (std::size_t i = 0; i < segments.size(); ++i) {
        check_web_id(segments[i].web_id);
        if (i > 0 && segments[i].web_id == segments[i - 1].web_id) {
            throw ValidationError(fmt::format("query {}: duplicate web_id {}", query_id, segments[i].web_id));
        }
    }
    SourceDocument doc;
    doc.query_id = std::move(query_id);
    for (const Segment& s : segments) {
        doc.rendered += kDelimiterPrefix;
        doc.rendered += s.web_id;
        doc.rendered += kClose;
        doc.rendered += '\n';
        const std::size_t begin = doc.rendered.size();
        doc.rendered += escape_body(s.text);
        doc.index_map.push_back({begin, doc.rendered.size(), s.web_id});
        doc.rendered += '\n';
    }
    doc.segments = std::move(segments);
    return doc;
}

SourceDocument assemble_document(const std::string& query_id, std::span<const Dataset2Row> rows) {
    std::vector<Segment> segments;
    for (const Dataset2Row& r : rows) {
        if (r.query_id != query_id) {
            throw ValidationError(fmt::format("row {} belongs to query {}, not {}", r.web_id, r.query_id, query_id));
        }
        segments.push_back({r.web_id, r.chunk_text});
    }
    return assemble_document(query_id, std::move(segments));
}

std::vector<SourceDocument> documents_from_rows(std::span<const Dataset2Row> rows) {
    std::map<std::string, std::vector<Dataset2Row>> by_query;
    for (const Dataset2Row& r : rows) by_query[r.query_id].push_back(r);
    std::vector<SourceDocument> docs;
    for (const auto& [qid, group] : by_query) docs.push_back(assemble_document(qid, std::span<const Dataset2Row>(group)));
    return docs;
}

std::vector<Segment> parse_document(std::string_view rendered) {
    struct Line {
        std::size_t begin, end;  // end excludes the newline
    };
    std::vector<Line> delimiters;
    std::vector<std::string_view> ids;
    for (std::size_t pos = 0; pos < rendered.size();) {
        std::size_t nl = rendered.find('\n', pos);
        const std::size_t end = nl == std::string_view::npos ? rendered.size() : nl;
        if (const auto id = delimiter_id(rendered.substr(pos, end - pos))) {
            delimiters.push_back({pos, end});
            ids.push_back(*id);
        }
        pos = nl == std::string_view::npos ? rendered.size() : nl + 1;
    }
    if (delimiters.empty()) {
        if (rendered.empty()) return {};
        throw ParseError(1, "source document has no delimiter lines");
    }
    if (delimiters.front().begin != 0) throw ParseError(1, "source document has text before the first delimiter");
    std::vector<Segment> out;
    for (std::size_t i = 0; i < delimiters.size(); ++i) {
        const std::size_t body_begin = delimiters[i].end + 1;
        const std::size_t next = i + 1 < delimiters.size() ? delimiters[i + 1].begin : rendered.size();
        if (body_begin > next || next == 0 || rendered[next - 1] != '\n') {
            throw ParseError(0, fmt::format("segment {} is not terminated by a newline", ids[i]));
        }
        out.push_back({std::string(ids[i]), unescape_body(rendered.substr(body_begin, next - 1 - body_begin))});
    }
    return out;
}

std::vector<Marker> find_markers(std::string_view answer, const MarkerGrammar& grammar) {
    std::regex re;
    try {
        re = std::regex(grammar.pattern, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
        throw Error(ErrorCategory::config, fmt::format("marker pattern '{}': {}", grammar.pattern, e.what()));
    }
    std::vector<Marker> out;
    const std::string s(answer);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), re); it != std::sregex_iterator(); ++it) {
        const std::smatch& m = *it;
        Marker mk;
        mk.text = m.str(0);
        mk.offset = static_cast<std::size_t>(m.position(0));
        if (m.size() > 1 && m[1].matched) {
            try {
                mk.index = std::stoi(m.str(1));
            } catch (const std::exception&) {
                mk.index = 0;
            }
        }
        out.push_back(std::move(mk));
    }
    return out;
}

AnnotatedResponse parse_response(std::string_view raw, const std::string& query_id) {
    using nlohmann::json;
    auto fail = [&](const std::string& why) -> ParseError {
        return ParseError(0, fmt::format("response for query {}: {}", query_id, why));
    };
    json j;
    try {
        j = json::parse(raw);
    } catch (const json::parse_error& e) {
        throw fail(e.what());
    }
    if (!j.is_object()) throw fail("body is not a JSON object");
    AnnotatedResponse r;
    r.query_id = query_id;
    auto get_string = [&](const json& obj, const char* key) -> std::string {
        const auto it = obj.find(key);
        if (it == obj.end() || it->is_null()) return {};
        if (!it->is_string()) throw fail(fmt::format("'{}' must be a string", key));
        return it->get<std::string>();
    };
    try {
        if (j.contains("answer")) {
            r.answer = get_string(j, "answer");
            const auto it = j.find("annotations");
            if (it != j.end()) {
                if (!it->is_array()) throw fail("'annotations' must be an array");
                for (const json& a : *it) {
                    if (!a.is_object()) throw fail("annotation is not an object");
                    Annotation ann{get_string(a, "marker"), get_string(a, "quote"), std::nullopt};
                    if (a.contains("start") || a.contains("end")) {
                        if (!a.contains("start") || !a.contains("end") || !a["start"].is_number_unsigned() ||
                            !a["end"].is_number_unsigned()) {
                            throw fail("annotation span needs non-negative integer 'start' and 'end'");
                        }
                        ann.span = std::pair{a["start"].get<std::size_t>(), a["end"].get<std::size_t>()};
                        if (ann.span->first > ann.span->second) throw fail("annotation span has start > end");
                    }
                    r.annotations.push_back(std::move(ann));
                }
            }
        } else if (j.contains("content")) {
            if (!j["content"].is_array()) throw fail("'content' must be an array");
            for (const json& part : j["content"]) {
                if (!part.is_object() || get_string(part, "type") != "text") continue;
                const auto t = part.find("text");
                if (t == part.end() || !t->is_object()) throw fail("text part lacks a 'text' object");
                r.answer += get_string(*t, "value");
                const auto anns = t->find("annotations");
                if (anns == t->end()) continue;
                if (!anns->is_array()) throw fail("'annotations' must be an array");
                for (const json& a : *anns) {
                    if (!a.is_object()) throw fail("annotation is not an object");
                    Annotation ann{get_string(a, "text"), {}, std::nullopt};
                    const auto fc = a.find("file_citation");
                    if (fc != a.end() && fc->is_object()) ann.quote = get_string(*fc, "quote");
                    r.annotations.push_back(std::move(ann));
                }
            }
        } else {
            throw fail("neither 'answer' nor 'content' present");
        }
    } catch (const json::exception& e) {
        throw fail(e.what());
    }
    return r;
}

std::string render_response(const AnnotatedResponse& response) {
    nlohmann::ordered_json j;
    j["answer"] = response.answer;
    j["annotations"] = nlohmann::ordered_json::array();
    for (const Annotation& a : response.annotations) {
        nlohmann::ordered_json o;
        o["marker"] = a.marker;
        o["quote"] = a.quote;
        if (a.span) {
            o["start"] = a.span->first;
            o["end"] = a.span->second;
        }
        j["annotations"].push_back(std::move(o));
    }
    return j.dump(2);
}

std::string_view resolve_method_name(ResolveMethod method) {
    switch (method) {
        case ResolveMethod::span: return "span";
        case ResolveMethod::containment: return "containment";
        case ResolveMethod::lcs: return "lcs";
    }
    return "unknown";
}

Resolution resolve_annotations(const SourceDocument& doc, const AnnotatedResponse& response, double lcs_threshold) {
    if (response.query_id != doc.query_id) {
        throw ValidationError(
            fmt::format("response for query {} resolved against document {}", response.query_id, doc.query_id));
    }
    Resolution out;
    out.query_id = doc.query_id;
    std::vector<std::u32string> folded_segments;
    for (const Segment& s : doc.segments) folded_segments.push_back(text::decode_utf8(text::normalize_space(s.text)));

    for (std::size_t i = 0; i < response.annotations.size(); ++i) {
        const Annotation& a = response.annotations[i];
        UnresolvedAnnotation miss{i, a.marker, a.quote, {}, 0.0, {}};
        auto resolve = [&](std::string id, ResolveMethod method, double score) {
            out.cited.insert(id);
            out.resolved.push_back({i, std::move(id), method, score});
        };

        if (a.span && a.span->first < a.span->second) {
            const auto first = doc.web_id_at(a.span->first);
            const auto last = doc.web_id_at(a.span->second - 1);
            if (first && last && *first == *last) {
                resolve(*first, ResolveMethod::span, 1.0);
                continue;
            }
        }
        if (text::trim(a.quote).empty()) {
            miss.reason = "no quote and no span inside a single segment";
            out.unresolved.push_back(std::move(miss));
            continue;
        }

        std::vector<std::string> containing;
        for (const Segment& s : doc.segments) {
            if (s.text.find(a.quote) != std::string::npos) containing.push_back(s.web_id);
        }
        if (containing.size() == 1) {
            resolve(containing.front(), ResolveMethod::containment, 1.0);
            continue;
        }
        if (containing.size() > 1) {
            miss.reason = "quote appears in several segments";
            miss.best_score = 1.0;
            miss.candidates = std::move(containing);
            out.unresolved.push_back(std::move(miss));
            continue;
        }

        const std::u32string quote = text::decode_utf8(quote_for_matching(a.quote));
        if (quote.empty()) {
            miss.reason = "quote is only an ellipsis";
            out.unresolved.push_back(std::move(miss));
            continue;
        }
        std::size_t best = 0;
        std::vector<std::string> tied;
        for (std::size_t k = 0; k < doc.segments.size(); ++k) {
            const std::size_t l = lcs_length(quote, folded_segments[k]);
            if (l > best) {
                best = l;
                tied.assign(1, doc.segments[k].web_id);
            } else if (l == best && l > 0) {
                tied.push_back(doc.segments[k].web_id);
            }
        }
        const double score = static_cast<double>(best) / static_cast<double>(quote.size());
        miss.best_score = score;
        if (score < lcs_threshold) {
            miss.reason = fmt::format("best LCS score {:.3f} is below the threshold {}", score, lcs_threshold);
            out.unresolved.push_back(std::move(miss));
        } else if (tied.size() > 1) {
            miss.reason = "LCS score tied between several segments";
            miss.candidates = std::move(tied);
            out.unresolved.push_back(std::move(miss));
        } else {
            resolve(tied.front(), ResolveMethod::lcs, score);
        }
    }
    for (const UnresolvedAnnotation& u : out.unresolved) {
        spdlog::warn("query {}: annotation {} {} unresolved: {}", out.query_id, u.annotation, u.marker, u.reason);
    }
    return out;
}

void add_citations(CitationMap& out, const SourceDocument& doc, const Resolution& resolution) {
    for (const Segment& s : doc.segments) out[{doc.query_id, s.web_id}] = resolution.cited.count(s.web_id) ? 1 : 0;
}

void write_unresolved(std::ostream& out, std::span<const Resolution> resolutions) {
    csv::write_row(out, {"query_id", "annotation", "marker", "quote", "reason", "best_score", "candidates"});
    for (const Resolution& r : resolutions) {
        for (const UnresolvedAnnotation& u : r.unresolved) {
            std::string candidates;
            for (const std::string& c : u.candidates) candidates += (candidates.empty() ? "" : ";") + c;
            csv::write_row(out, {r.query_id, std::to_string(u.annotation), u.marker, u.quote, u.reason,
                                 fmt::format("{:.4f}", u.best_score), candidates});
        }
    }
}

// ---------------------------------------------------------------------------
// Archive and service calls

namespace {

void check_query_id_for_file(const std::string& id) {
    if (id.empty() || id.front() == '.' ||
        id.find_first_of("/\\:*?\"<>|\n\r") != std::string::npos) {
        throw ValidationError(fmt::format("query_id '{}' cannot be used in an archive file name", id));
    }
}

// "<stamp>" or "<stamp>-<n>" with stamp like 20260101T120000123Z.
std::optional<std::pair<std::string, int>> parse_stamp(std::string_view s) {
    const std::size_t dash = s.find('-');
    const std::string_view stamp = s.substr(0, dash);
    if (stamp.size() != 19 || stamp[8] != 'T' || stamp[18] != 'Z') return std::nullopt;
    int n = 0;
    if (dash != std::string_view::npos) {
        const std::string_view digits = s.substr(dash + 1);
        if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
            return std::nullopt;
        }
        n = std::stoi(std::string(digits));
    }
    return std::pair{std::string(stamp), n};
}

std::string utc_stamp() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%S", &tm);
    return fmt::format("{}{:03d}Z", buf, ms);
}

}  // namespace

RawArchive::RawArchive(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path RawArchive::store(const std::string& query_id, std::string_view raw) const {
    check_query_id_for_file(query_id);
    static std::mutex mutex;
    const std::lock_guard lock(mutex);
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError(fmt::format("cannot create archive directory {}: {}", dir_.string(), ec.message()));
    const std::string stamp = utc_stamp();
    std::filesystem::path path = dir_ / fmt::format("{}.{}.json", query_id, stamp);
    for (int n = 1; std::filesystem::exists(path); ++n) {
        path = dir_ / fmt::format("{}.{}-{}.json", query_id, stamp, n);
    }
    std::ofstream f(path, std::ios::binary);
    f.write(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!f) throw IoError("cannot write " + path.string());
    return path;
}

std::optional<std::filesystem::path> RawArchive::latest(const std::string& query_id) const {
    check_query_id_for_file(query_id);
    std::error_code ec;
    if (!std::filesystem::is_directory(dir_, ec)) return std::nullopt;
    const std::string prefix = query_id + ".";
    std::optional<std::filesystem::path> best;
    std::pair<std::string, int> best_key;
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
        const std::string name = entry.path().filename().string();
        if (!name.starts_with(prefix) || !name.ends_with(".json")) continue;
        const auto key = parse_stamp(std::string_view(name).substr(prefix.size(), name.size() - prefix.size() - 5));
        if (key && (!best || *key > best_key)) {
            best = entry.path();
            best_key = *key;
        }
    }
    return best;
}

std::string RawArchive::load(const std::string& query_id) const {
    const auto path = latest(query_id);
    if (!path) throw IoError(fmt::format("no archived response for query {} in {}", query_id, dir_.string()));
    std::ifstream f(*path, std::ios::binary);
    if (!f) throw IoError("cannot read " + path->string());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string request_body(const SourceDocument& doc, std::string_view query_text, const ServiceConfig& config) {
    nlohmann::ordered_json j;
    j["query"] = std::string(query_text);
    j["document"] = doc.rendered;
    j["instructions"] = config.instructions;
    return j.dump();
}

AnnotatedResponse submit(const SourceDocument& doc, std::string_view query_text, const net::JsonTransport& transport,
                         const ServiceConfig& config, const RawArchive& archive) {
    const std::string body = request_body(doc, query_text, config);
    const std::string raw = net::with_retries(config.retry, [&] { return transport.post(body); });
    archive.store(doc.query_id, raw);
    return parse_response(raw, doc.query_id);
}

AnnotatedResponse replay(const SourceDocument& doc, const RawArchive& archive) {
    return parse_response(archive.load(doc.query_id), doc.query_id);
}

CollectResult collect(std::span<const CollectItem> items, const net::JsonTransport* transport,
                      const ServiceConfig& config, const RawArchive& archive, bool replay_only,
                      double lcs_threshold) {
    if (!replay_only && transport == nullptr) {
        throw Error(ErrorCategory::config, "rag collection needs a service endpoint unless replaying");
    }
    std::vector<AnnotatedResponse> responses(items.size());
    std::atomic<std::size_t> requests{0};
    std::mutex slot_mutex;
    auto next_slot = std::chrono::steady_clock::now();
    parallel_for(items.size(), std::max<std::size_t>(1, config.max_concurrent), [&](std::size_t i) {
        if (replay_only) {
            responses[i] = replay(items[i].doc, archive);
            return;
        }
        if (config.min_interval.count() > 0) {
            std::chrono::steady_clock::time_point start;
            {
                const std::lock_guard lock(slot_mutex);
                start = std::max(next_slot, std::chrono::steady_clock::now());
                next_slot = start + config.min_interval;
            }
            std::this_thread::sleep_until(start);
        }
        ++requests;
        responses[i] = submit(items[i].doc, items[i].query_text, *transport, config, archive);
    });
    CollectResult out;
    out.requests = requests.load();
    for (std::size_t i = 0; i < items.size(); ++i) {
        out.resolutions.push_back(resolve_annotations(items[i].doc, responses[i], lcs_threshold));
        add_citations(out.citations, items[i].doc, out.resolutions.back());
    }
    return out;
}

}  // namespace citecrit::rag
