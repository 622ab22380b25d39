#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "citecrit/error.hpp"
#include "citecrit/ragclient.hpp"

using namespace citecrit;
using namespace citecrit::rag;
namespace fs = std::filesystem;

namespace {

const fs::path kRagData = fs::path(CITECRIT_TEST_DATA_DIR) / "rag";

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct LabeledFixture {
    SourceDocument doc;
    std::string query;
    std::vector<std::pair<std::string, std::string>> cases;  // quote, expected web_id
};

LabeledFixture load_labeled() {
    const auto j = nlohmann::json::parse(read_file(kRagData / "labeled_cases.json"));
    std::vector<Segment> segments;
    for (const auto& s : j["segments"]) segments.push_back({s["web_id"], s["text"]});
    LabeledFixture f{assemble_document(j["query_id"], segments), j["query"], {}};
    for (const auto& c : j["cases"]) f.cases.emplace_back(c["quote"], c["expected"]);
    return f;
}

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("citecrit-rag-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

class CannedTransport final : public net::JsonTransport {
public:
    explicit CannedTransport(std::map<std::string, std::string> by_query) : by_query_(std::move(by_query)) {}
    std::string post(const std::string& body) const override {
        ++calls;
        const auto j = nlohmann::json::parse(body);
        last_body = body;
        return by_query_.at(j["query"].get<std::string>());
    }
    mutable std::atomic<int> calls{0};
    mutable std::string last_body;

private:
    std::map<std::string, std::string> by_query_;
};

class FailingTransport final : public net::JsonTransport {
public:
    std::string post(const std::string&) const override {
        ++calls;
        throw TransportError("connection refused");
    }
    mutable std::atomic<int> calls{0};
};

ServiceConfig fast_config() {
    ServiceConfig c;
    c.retry.max_attempts = 3;
    c.retry.initial_backoff = std::chrono::milliseconds(0);
    return c;
}

AnnotatedResponse with_quotes(const std::string& qid, const std::vector<std::string>& quotes) {
    AnnotatedResponse r{qid, "answer", {}};
    for (std::size_t i = 0; i < quotes.size(); ++i) {
        r.annotations.push_back({"【" + std::to_string(i) + "†source】", quotes[i], std::nullopt});
    }
    return r;
}

}  // namespace

TEST_CASE("three segments render three delimiters and offsets map back") {
    const auto doc = assemble_document("q1", {{"b", "second text"}, {"a", "first text"}, {"c", "third"}});
    CHECK(doc.segments.front().web_id == "a");
    std::size_t delimiters = 0;
    std::istringstream lines(doc.rendered);
    for (std::string line; std::getline(lines, line);) delimiters += line.starts_with("⟦web:");
    CHECK(delimiters == 3);
    REQUIRE(doc.index_map.size() == 3);
    for (const auto& span : doc.index_map) {
        for (std::size_t o = span.begin; o < span.end; ++o) CHECK(doc.web_id_at(o) == span.web_id);
        CHECK_FALSE(doc.web_id_at(span.begin - 1).has_value());  // delimiter line newline
    }
    CHECK(doc.rendered.substr(doc.index_map[1].begin, doc.index_map[1].end - doc.index_map[1].begin) ==
          "second text");
}

TEST_CASE("single segment renders as delimiter plus chunk") {
    const auto doc = assemble_document("q1", {{"w1", "Only chunk."}});
    CHECK(doc.rendered == "⟦web:w1⟧\nOnly chunk.\n");
}

TEST_CASE("render then parse recovers every segment exactly") {
    std::mt19937_64 rng(42);
    const std::vector<std::string> pieces = {"word", " ", "\n", "⟦", "⟧", "web:", "⟦web:x⟧", "é", "【1†s】", ".", "⟦⟦"};
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Segment> segments;
        for (int k = 0; k < 20; ++k) {
            std::string text;
            const int n = static_cast<int>(rng() % 300);
            for (int i = 0; i < n; ++i) text += pieces[rng() % pieces.size()];
            segments.push_back({"q-w" + std::to_string(100 + k), text});
        }
        const auto doc = assemble_document("q", segments);
        CHECK(parse_document(doc.rendered) == doc.segments);
    }
}

TEST_CASE("assembly rejects empty input, duplicates and unusable ids") {
    CHECK_THROWS_AS(assemble_document("q", std::vector<Segment>{}), ValidationError);
    CHECK_THROWS_AS(assemble_document("q", {{"a", "x"}, {"a", "y"}}), ValidationError);
    CHECK_THROWS_AS(assemble_document("q", {{"a\nb", "x"}}), ValidationError);
    CHECK_THROWS_AS(assemble_document("q", {{"a⟧", "x"}}), ValidationError);
    CHECK_THROWS_AS(parse_document("preamble\n⟦web:a⟧\nx\n"), ParseError);
}

TEST_CASE("verbatim quote resolves to its segment and repeats collapse") {
    const auto doc = assemble_document("q", {{"w1", "alpha beta gamma"}, {"w2", "delta epsilon zeta"}});
    auto r = resolve_annotations(doc, with_quotes("q", {"delta epsilon"}));
    CHECK(r.cited == std::set<std::string>{"w2"});
    CHECK(r.resolved.front().method == ResolveMethod::containment);

    r = resolve_annotations(doc, with_quotes("q", {"delta", "epsilon zeta"}));
    CHECK(r.cited == std::set<std::string>{"w2"});
    CHECK(r.resolved.size() == 2);
}

TEST_CASE("spans resolve first and fall back to the quote when they straddle segments") {
    const auto doc = assemble_document("q", {{"w1", "alpha beta gamma"}, {"w2", "delta epsilon zeta"}});
    AnnotatedResponse r{"q", "", {{"m", "", std::pair{doc.index_map[0].begin + 2, doc.index_map[0].begin + 8}}}};
    auto res = resolve_annotations(doc, r);
    CHECK(res.cited == std::set<std::string>{"w1"});
    CHECK(res.resolved.front().method == ResolveMethod::span);

    r.annotations[0].span = std::pair{doc.index_map[0].begin, doc.index_map[1].end};
    r.annotations[0].quote = "epsilon zeta";
    res = resolve_annotations(doc, r);
    CHECK(res.cited == std::set<std::string>{"w2"});
    CHECK(res.resolved.front().method == ResolveMethod::containment);
}

TEST_CASE("weak and ambiguous quotes are reported, not dropped") {
    const auto doc = assemble_document("q", {{"w1", "shared phrase here"}, {"w2", "another shared phrase"}});
    const auto r = resolve_annotations(doc, with_quotes("q", {"completely unrelated words xyzzy", "shared phrase", ""}));
    CHECK(r.cited.empty());
    REQUIRE(r.unresolved.size() == 3);
    CHECK(r.unresolved[0].best_score < 0.6);
    CHECK(r.unresolved[1].candidates == std::vector<std::string>{"w1", "w2"});

    std::ostringstream csv;
    write_unresolved(csv, std::span<const Resolution>(&r, 1));
    std::size_t lines = 0;
    for (char c : csv.str()) lines += c == '\n';
    CHECK(lines == 4);

    CHECK_THROWS_AS(resolve_annotations(doc, with_quotes("other", {"x"})), ValidationError);
}

TEST_CASE("resolution never invents a web_id") {
    std::mt19937_64 rng(9);
    const std::string letters = "abcde fgh";
    std::vector<Segment> segs;
    for (int k = 0; k < 6; ++k) {
        std::string t;
        for (int i = 0; i < 80; ++i) t += letters[rng() % letters.size()];
        segs.push_back({"w" + std::to_string(k), t});
    }
    const auto doc = assemble_document("q", segs);
    std::vector<std::string> quotes;
    for (int i = 0; i < 60; ++i) {
        std::string t;
        for (int j = 0; j < 20; ++j) t += letters[rng() % letters.size()];
        quotes.push_back(t);
    }
    const auto r = resolve_annotations(doc, with_quotes("q", quotes));
    CHECK(r.resolved.size() + r.unresolved.size() == quotes.size());
    for (const auto& id : r.cited) {
        CHECK(std::any_of(segs.begin(), segs.end(), [&](const Segment& s) { return s.web_id == id; }));
    }
}

TEST_CASE("hand-labeled quotes are all attributed correctly") {
    const LabeledFixture f = load_labeled();
    REQUIRE(f.cases.size() == 10);
    std::size_t correct = 0;
    for (const auto& [quote, expected] : f.cases) {
        const auto r = resolve_annotations(f.doc, with_quotes(f.doc.query_id, {quote}));
        CAPTURE(quote);
        CHECK(r.cited == std::set<std::string>{expected});
        correct += r.cited == std::set<std::string>{expected};
    }
    CHECK(correct == 10);
}

TEST_CASE("sample assistant message parses into five annotations over four pages") {
    const LabeledFixture f = load_labeled();
    const auto response = parse_response(read_file(kRagData / "sample_response.json"), f.doc.query_id);
    REQUIRE(response.annotations.size() == 5);
    const auto markers = find_markers(response.answer);
    REQUIRE(markers.size() == 5);
    for (std::size_t i = 0; i < markers.size(); ++i) {
        CHECK(markers[i].index == static_cast<int>(7 + i));
        CHECK(markers[i].text == response.annotations[i].marker);
        CHECK(response.answer.compare(markers[i].offset, markers[i].text.size(), markers[i].text) == 0);
    }
    const auto r = resolve_annotations(f.doc, response);
    CHECK(r.unresolved.empty());
    CHECK(r.cited == std::set<std::string>{"w01", "w03", "w04", "w07"});

    CitationMap flags;
    add_citations(flags, f.doc, r);
    CHECK(flags.size() == 8);
    CHECK(flags.at({f.doc.query_id, "w03"}) == 1);
    CHECK(flags.at({f.doc.query_id, "w02"}) == 0);
}

TEST_CASE("marker grammar is configurable") {
    const auto m = find_markers("a [3:1|src] b [12|doc]", MarkerGrammar{R"(\[(\d+)(?::(\d+))?\|(.*?)\])"});
    REQUIRE(m.size() == 2);
    CHECK(m[0].index == 3);
    CHECK(m[1].index == 12);
    CHECK(find_markers("x 【4:0†source】 y").at(0).index == 4);
    CHECK_THROWS_AS(find_markers("x", MarkerGrammar{"(unclosed"}), Error);
}

TEST_CASE("canonical response JSON round-trips") {
    AnnotatedResponse r{"q", "text 【1†source】", {{"【1†source】", "a quote", std::pair{std::size_t{3}, std::size_t{9}}},
                                                 {"", "other", std::nullopt}}};
    const auto back = parse_response(render_response(r), "q");
    CHECK(back.answer == r.answer);
    REQUIRE(back.annotations.size() == 2);
    CHECK(back.annotations[0].span == r.annotations[0].span);
    CHECK(back.annotations[1].quote == "other");
    CHECK_FALSE(back.annotations[1].span.has_value());

    CHECK_THROWS_AS(parse_response("not json", "q"), ParseError);
    CHECK_THROWS_AS(parse_response("[]", "q"), ParseError);
    CHECK_THROWS_AS(parse_response(R"({"other": 1})", "q"), ParseError);
    CHECK_THROWS_AS(parse_response(R"({"answer": "a", "annotations": [{"quote": 3}]})", "q"), ParseError);
}

TEST_CASE("submit archives the raw body and replay reproduces it offline") {
    const LabeledFixture f = load_labeled();
    const std::string raw = read_file(kRagData / "sample_response.json");
    CannedTransport transport(std::map<std::string, std::string>{{f.query, raw}});
    TempDir dir;
    const RawArchive archive(dir.path());
    const auto live = submit(f.doc, f.query, transport, fast_config(), archive);
    CHECK(transport.calls == 1);
    const auto body = nlohmann::json::parse(transport.last_body);
    CHECK(body["document"] == f.doc.rendered);
    CHECK(body["query"] == f.query);
    CHECK(body.contains("instructions"));
    CHECK(archive.load(f.doc.query_id) == raw);

    const auto again = replay(f.doc, archive);
    CHECK(render_response(again) == render_response(live));

    const std::vector<CollectItem> items = {{f.doc, f.query}};
    const auto offline = collect(items, nullptr, fast_config(), archive, true);
    CHECK(offline.requests == 0);
    CHECK(offline.citations == collect(items, &transport, fast_config(), archive, false).citations);
}

TEST_CASE("unparseable bodies are archived before the error surfaces") {
    const LabeledFixture f = load_labeled();
    CannedTransport transport(std::map<std::string, std::string>{{f.query, "<html>rate limited</html>"}});
    TempDir dir;
    const RawArchive archive(dir.path());
    CHECK_THROWS_AS(submit(f.doc, f.query, transport, fast_config(), archive), ParseError);
    CHECK(archive.load(f.doc.query_id) == "<html>rate limited</html>");
}

TEST_CASE("transport failures retry a bounded number of times") {
    const LabeledFixture f = load_labeled();
    FailingTransport transport;
    TempDir dir;
    const RawArchive archive(dir.path());
    CHECK_THROWS_AS(submit(f.doc, f.query, transport, fast_config(), archive), TransportError);
    CHECK(transport.calls == 3);
    CHECK_FALSE(archive.latest(f.doc.query_id).has_value());
    CHECK_THROWS_AS(collect(std::vector<CollectItem>{{f.doc, f.query}}, nullptr, fast_config(), archive, false), Error);
}

TEST_CASE("archive picks the newest file of exactly the requested query") {
    TempDir dir;
    fs::create_directories(dir.path());
    auto put = [&](const std::string& name, const std::string& body) { std::ofstream(dir.path() / name) << body; };
    put("q1.20260101T000000000Z.json", "old");
    put("q1.20260102T000000000Z.json", "new");
    put("q1.20260102T000000000Z-1.json", "newest");
    put("q10.20270101T000000000Z.json", "other query");
    put("q1.notes.json", "not a stamp");
    const RawArchive archive(dir.path());
    CHECK(archive.load("q1") == "newest");
    CHECK(archive.load("q10") == "other query");
    CHECK_THROWS_AS(archive.load("q2"), IoError);
    CHECK_THROWS_AS(archive.store("../escape", "x"), ValidationError);

    const auto stored = archive.store("q3", "body");
    CHECK(archive.latest("q3") == stored);
}
