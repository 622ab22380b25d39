#include "citecrit/summary.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>

#include <fmt/format.h>

#include "citecrit/corpus.hpp"
#include "citecrit/csv.hpp"
#include "citecrit/error.hpp"

namespace citecrit {

SummaryRow summarize(std::string statistic, std::span<const double> values) {
    if (values.empty()) throw ValidationError("cannot summarize empty input for " + statistic);
    SummaryRow row;
    row.statistic = std::move(statistic);
    row.n = values.size();
    double sum = 0.0;
    for (double v : values) sum += v;
    row.mean = sum / static_cast<double>(row.n);
    if (row.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - row.mean) * (v - row.mean);
        row.sd = std::sqrt(ss / static_cast<double>(row.n - 1));
    } else {
        row.sd_undefined = true;
    }
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    row.min = sorted.front();
    row.max = sorted.back();
    const std::size_t mid = row.n / 2;
    row.median = (row.n % 2 == 1) ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    return row;
}

SummaryTable corpus_summary(const Corpus& corpus) {
    if (corpus.queries().empty()) throw ValidationError("cannot summarize an empty corpus");
    std::vector<double> total_webs, cited_sentences, cited_webs, webs_per_sentence, sentences_per_web;
    std::map<std::string, int> citing_sentences_by_page;
    for (const Query& q : corpus.queries()) {
        total_webs.push_back(static_cast<double>(corpus.pages_for(q.query_id).size()));
        int n_citing = 0;
        std::set<std::string> cited;
        if (const ChatResponse* r = corpus.response(q.query_id)) {
            for (const ResponseSentence& s : r->sentences) {
                if (s.cited_web_ids.empty()) continue;
                ++n_citing;
                webs_per_sentence.push_back(static_cast<double>(s.cited_web_ids.size()));
                for (const std::string& id : s.cited_web_ids) {
                    cited.insert(id);
                    ++citing_sentences_by_page[id];
                }
            }
        }
        cited_sentences.push_back(n_citing);
        cited_webs.push_back(static_cast<double>(cited.size()));
    }
    for (const WebPage& p : corpus.pages()) {
        const auto it = citing_sentences_by_page.find(p.web_id);
        sentences_per_web.push_back(it == citing_sentences_by_page.end() ? 0.0 : it->second);
    }
    SummaryTable table;
    table.push_back(summarize("NumTotalWebs", total_webs));
    table.push_back(summarize("NumCitedSentences", cited_sentences));
    table.push_back(summarize("NumCitedWebs", cited_webs));
    if (!webs_per_sentence.empty()) table.push_back(summarize("NumCitedWebsSent", webs_per_sentence));
    table.push_back(summarize("NumCitedSentencesWeb", sentences_per_web));
    return table;
}

void write_summary_csv(const SummaryTable& table, std::ostream& out) {
    out << "statistic,n,mean,sd,min,median,max\n";
    for (const SummaryRow& r : table) {
        csv::write_row(out, {r.statistic, std::to_string(r.n), fmt::format("{:.2f}", r.mean),
                             fmt::format("{:.2f}", r.sd), fmt::format("{:.2f}", r.min),
                             fmt::format("{:.2f}", r.median), fmt::format("{:.2f}", r.max)});
    }
}

std::string render_summary(const SummaryTable& table, const std::string& title) {
    std::size_t width = 9;
    for (const SummaryRow& r : table) width = std::max(width, r.statistic.size());
    std::string out = title + "\n";
    const std::string rule(width + 6 * 11, '=');
    out += rule + "\n";
    out += fmt::format("{:<{}}{:>11}{:>11}{:>11}{:>11}{:>11}{:>11}\n", "Statistic", width, "N", "Mean",
                       "St. Dev.", "Min", "Median", "Max");
    out += std::string(width + 6 * 11, '-') + "\n";
    bool any_undefined = false;
    for (const SummaryRow& r : table) {
        any_undefined = any_undefined || r.sd_undefined;
        out += fmt::format("{:<{}}{:>11}{:>11.2f}{:>11}{:>11.2f}{:>11.2f}{:>11.2f}\n", r.statistic, width,
                           r.n, r.mean, fmt::format("{:.2f}{}", r.sd, r.sd_undefined ? "+" : ""), r.min,
                           r.median, r.max);
    }
    out += rule + "\n";
    if (any_undefined) out += "+ standard deviation undefined for a single observation; shown as 0\n";
    return out;
}

}  // namespace citecrit
