#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "citecrit/corpus.hpp"
#include "citecrit/error.hpp"
#include "citecrit/summary.hpp"

using namespace citecrit;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const std::string kMinimal = read_file(std::string(CITECRIT_TEST_DATA_DIR) + "/minimal_capture.jsonl");

Corpus load_string(const std::string& s) {
    std::istringstream in(s);
    return load_capture(in);
}

std::string save_string(const Corpus& c) {
    std::ostringstream out;
    save_corpus(c, out);
    return out.str();
}

std::vector<std::string> lines_of(const std::string& s) {
    std::vector<std::string> lines;
    std::istringstream in(s);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
}

std::string join_lines(const std::vector<std::string>& lines) {
    std::string out;
    for (const auto& l : lines) out += l + "\n";
    return out;
}

const SummaryRow& row_named(const SummaryTable& t, const std::string& name) {
    const auto it = std::find_if(t.begin(), t.end(), [&](const SummaryRow& r) { return r.statistic == name; });
    REQUIRE(it != t.end());
    return *it;
}

}  // namespace

TEST_CASE("minimal capture loads") {
    const Corpus c = load_string(kMinimal);
    CHECK(c.queries().size() == 1);
    CHECK(c.pages().size() == 2);
    CHECK(c.response_count() == 1);
    CHECK(c.page("w1").rank == 1);
    CHECK(!c.page("w2").listed);
}

TEST_CASE("record order does not matter") {
    auto lines = lines_of(kMinimal);
    const Corpus ref = load_string(kMinimal);
    std::mt19937 rng(7);
    for (int i = 0; i < 5; ++i) {
        std::shuffle(lines.begin(), lines.end(), rng);
        CHECK(load_string(join_lines(lines)) == ref);
    }
}

TEST_CASE("dangling reference names the id") {
    auto lines = lines_of(kMinimal);
    lines.push_back(R"({"kind":"webpage","web_id":"w9","query_id":"q404","url":"u","listed":false,"full_text":"x"})");
    try {
        load_string(join_lines(lines));
        FAIL("expected an error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("q404") != std::string::npos);
    }
}

TEST_CASE("citation of an unknown page is rejected") {
    auto lines = lines_of(kMinimal);
    lines[3] = R"({"kind":"response","query_id":"q1","sentences":[{"sentence_idx":0,"text":"x","cited_web_ids":["w7"]}]})";
    CHECK_THROWS_WITH_AS(load_string(join_lines(lines)), doctest::Contains("w7"), ValidationError);
}

TEST_CASE("malformed line reports its number") {
    auto lines = lines_of(kMinimal);
    lines.insert(lines.begin() + 2, "{not json");
    try {
        load_string(join_lines(lines));
        FAIL("expected an error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 3);
    }
}

TEST_CASE("invariant violations are rejected") {
    const std::string q = R"({"kind":"query","query_id":"q1","text":"t"})" "\n";
    auto page = [](const std::string& id, const std::string& url, const std::string& extra) {
        return R"({"kind":"webpage","web_id":")" + id + R"(","query_id":"q1","url":")" + url + "\"," + extra +
               R"(,"full_text":"x"})" "\n";
    };
    CHECK_THROWS_AS(load_string(q + page("w1", "a", R"("listed":true,"rank":21)")), ValidationError);
    CHECK_THROWS_AS(load_string(q + page("w1", "a", R"("listed":true,"rank":0)")), ValidationError);
    CHECK_THROWS_AS(load_string(q + page("w1", "a", R"("listed":true)")), ValidationError);
    CHECK_THROWS_AS(load_string(q + page("w1", "a", R"("listed":false,"rank":3)")), ValidationError);
    CHECK_THROWS_AS(load_string(q + page("w1", "a", R"("listed":false,"excerpt":"e")")), ValidationError);
    CHECK_THROWS_AS(load_string(q + page("w1", "a", R"("listed":false)") + page("w1", "b", R"("listed":false)")),
                    ValidationError);
    CHECK_THROWS_AS(load_string(q + page("w1", "a", R"("listed":false)") + page("w2", "a", R"("listed":false)")),
                    ValidationError);
    CHECK_THROWS_AS(load_string(q), ValidationError);
    CHECK_THROWS_AS(load_string(q + q + page("w1", "a", R"("listed":false)")), ValidationError);
    CHECK_THROWS_AS(load_string(R"({"kind":"query","query_id":"q1","text":"   "})" "\n" +
                                page("w1", "a", R"("listed":false)")),
                    ValidationError);
    CHECK_THROWS_AS(load_string(R"({"kind":"banner"})" "\n"), ParseError);
    // A response must cite at least one page.
    CHECK_THROWS_AS(load_string(q + page("w1", "a", R"("listed":false)") +
                                R"({"kind":"response","query_id":"q1","sentences":[{"sentence_idx":0,"text":"s","cited_web_ids":[]}]})" "\n"),
                    ValidationError);
}

TEST_CASE("save then load is the identity") {
    const Corpus c = load_string(kMinimal);
    const std::string once = save_string(c);
    const Corpus back = load_string(once);
    CHECK(back == c);
    CHECK(save_string(back) == once);
}

TEST_CASE("unicode text survives a round trip") {
    const std::string capture =
        R"({"kind":"query","query_id":"q1","text":"领带的起源 👔"})" "\n"
        R"({"kind":"webpage","web_id":"w1","query_id":"q1","url":"u","listed":false,"full_text":"古代中国的武士 🗡️ café"})" "\n"
        R"({"kind":"response","query_id":"q1","sentences":[{"sentence_idx":0,"text":"Ties ✔","cited_web_ids":["w1"]}]})" "\n";
    const Corpus c = load_string(capture);
    const Corpus back = load_string(save_string(c));
    CHECK(back == c);
    CHECK(back.page("w1").full_text == "古代中国的武士 🗡️ café");
}

TEST_CASE("hand-counted corpus summary") {
    const SummaryTable t = corpus_summary(load_string(kMinimal));
    CHECK(row_named(t, "NumTotalWebs").mean == 2.0);
    CHECK(row_named(t, "NumCitedSentences").mean == 1.0);
    CHECK(row_named(t, "NumCitedWebs").mean == 1.0);
    CHECK(row_named(t, "NumCitedWebsSent").n == 1);
    const SummaryRow& per_web = row_named(t, "NumCitedSentencesWeb");
    CHECK(per_web.n == 2);
    CHECK(per_web.min == 0.0);
    CHECK(per_web.max == 1.0);
    CHECK(per_web.mean == 0.5);
}

TEST_CASE("summarize agrees with a one-pass recomputation") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd(3.0, 2.0);
    std::vector<double> xs(1001);
    for (double& x : xs) x = nd(rng);
    const SummaryRow r = summarize("x", xs);
    // Welford's streaming update.
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double d = xs[i] - mean;
        mean += d / static_cast<double>(i + 1);
        m2 += d * (xs[i] - mean);
    }
    CHECK(std::fabs(r.mean - mean) < 1e-12);
    CHECK(std::fabs(r.sd - std::sqrt(m2 / 1000.0)) < 1e-12);
    auto sorted = xs;
    std::sort(sorted.begin(), sorted.end());
    CHECK(r.median == sorted[500]);
    CHECK(r.min == sorted.front());
    CHECK(r.max == sorted.back());
}

TEST_CASE("single observation reports sd 0 with a flag") {
    const std::vector<double> one = {4.0};
    const SummaryRow r = summarize("x", one);
    CHECK(r.sd == 0.0);
    CHECK(r.sd_undefined);
    CHECK(render_summary({r}, "t").find("undefined") != std::string::npos);
    CHECK_THROWS_AS(summarize("x", std::vector<double>{}), ValidationError);
}

TEST_CASE("summary csv uses two decimals") {
    const std::vector<double> v = {1.0, 2.0, 4.0};
    std::ostringstream out;
    write_summary_csv({summarize("X", v)}, out);
    CHECK(out.str() == "statistic,n,mean,sd,min,median,max\nX,3,2.33,1.53,1.00,2.00,4.00\n");
}
