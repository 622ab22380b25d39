#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace citecrit {

class Corpus;

/// Descriptive statistics for one variable. `sd` is the sample standard
/// deviation; with a single observation it is reported as 0 and
/// `sd_undefined` is set.
struct SummaryRow {
    std::string statistic;
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;
    double min = 0.0;
    double median = 0.0;
    double max = 0.0;
    bool sd_undefined = false;
};

using SummaryTable = std::vector<SummaryRow>;

/// Throws ValidationError on empty input.
SummaryRow summarize(std::string statistic, std::span<const double> values);

/// Raw-capture statistics: NumTotalWebs, NumCitedSentences, NumCitedWebs
/// (per query), NumCitedWebsSent (per citing sentence) and
/// NumCitedSentencesWeb (per page).
SummaryTable corpus_summary(const Corpus& corpus);

/// CSV with header statistic,n,mean,sd,min,median,max, rounded to 2 decimals.
void write_summary_csv(const SummaryTable& table, std::ostream& out);

/// Fixed-width text rendering in the same column order.
std::string render_summary(const SummaryTable& table, const std::string& title);

}  // namespace citecrit
