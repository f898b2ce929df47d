#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <vector>

namespace aita {

struct PairedSamples {
    std::vector<std::string> subject_ids;
    std::vector<double> a;
    std::vector<double> b;

    /// Throws PreconditionError unless |a| = |b| = |ids| ≥ 2 and all scores are finite.
    void validate() const;
};

enum class PermutationMode {
    Auto,               // exhaustive when n ≤ max_exhaustive_n, else sampled
    Exhaustive,         // all 2^n sign vectors
    MonteCarlo,         // n_resamples sign vectors drawn with replacement
    MonteCarloDistinct  // the first n_resamples of a seeded shuffle of all 2^n vectors (n ≤ 24)
};

struct PermutationOptions {
    std::size_t max_exhaustive_n = 20;
    std::uint64_t n_resamples = 100000;
    std::uint64_t seed = 7;
    PermutationMode mode = PermutationMode::Auto;
};

struct PermutationTestResult {
    double t_statistic = 0.0;
    double p_value = 1.0;
    std::uint64_t n_permutations_used = 0;
    std::uint64_t n_extreme = 0;
    bool exhaustive = false;
};

/// Sign-flip test on d = a − b with the one-sample Student's t statistic.
PermutationTestResult paired_permutation_test(const PairedSamples& samples, const PermutationOptions& options = {});

/// t = mean(d) / (sd(d)/√n), sample sd; 0 for all-zero d, ±inf for constant non-zero d.
double paired_t_statistic(const std::vector<double>& a, const std::vector<double>& b);

/// p·m clamped to 1.
double bonferroni(double p, std::size_t comparisons);

/// Likert entry: 1..5, or nullopt for N/A.
using LikertEntry = std::optional<int>;

struct LikertStats {
    double mean = 0.0;
    double sd = 0.0;  // population (n denominator)
    std::size_t n = 0;
};

/// Throws PreconditionError on empty input and UndefinedValueError when every
/// entry is N/A.
LikertStats likert_stats(const std::vector<LikertEntry>& responses);

/// "4", "4.0", "Agree", "Often" → 4; the N/A token or an empty cell → nullopt.
/// Anything else is a ParseError.
LikertEntry parse_likert(std::string_view cell, std::string_view na_token = "N/A");

/// 100·(ours − theirs)/theirs. Throws UndefinedValueError when theirs = 0.
double delta_percent(double ours, double theirs);

/// "+3.0", "-4.8", "0.0".
std::string format_delta(double percent);

struct SummaryRow {
    std::string label;
    double mean = 0.0;
    double sd = 0.0;
    std::size_t n = 0;
};

struct ComparisonRow {
    std::string label;
    SummaryRow ours;
    SummaryRow theirs;
    double delta_mean = 0.0;
    double delta_sd = 0.0;
};

/// Rows pair positionally; labels must agree. Length mismatch → PreconditionError.
std::vector<ComparisonRow> comparison_table(const std::vector<SummaryRow>& ours, const std::vector<SummaryRow>& theirs);
std::string render_comparison_table(const std::vector<ComparisonRow>& rows);

/// Minimal CSV (RFC 4180 quoting, header row required).
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    /// Throws PreconditionError if the column is absent.
    std::size_t column(std::string_view name) const;
    std::vector<std::string> column_values(std::string_view name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

/// Numeric column; throws ParseError naming the row on a non-number.
std::vector<double> numeric_column(const CsvTable& table, std::string_view name);

/// label,mean,sd,n rows (n optional).
std::vector<SummaryRow> read_summary_csv(const std::string& path);

}  // namespace aita
