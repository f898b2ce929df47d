#include "aita/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "aita/errors.hpp"
#include "aita/kernels.hpp"
#include "aita/text.hpp"

namespace aita {

void PairedSamples::validate() const {
    if (a.size() != b.size()) throw PreconditionError("paired samples differ in length");
    if (!subject_ids.empty() && subject_ids.size() != a.size()) {
        throw PreconditionError("subject ids do not match the number of pairs");
    }
    if (a.size() < 2) throw PreconditionError("a paired test needs at least two subjects");
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a[i]) || !std::isfinite(b[i])) {
            throw PreconditionError("non-finite score for subject " + std::to_string(i));
        }
    }
}

namespace {

std::vector<double> differences(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return d;
}

double signed_t(const std::vector<double>& d) {
    double sum = 0.0, sum_sq = 0.0;
    for (double x : d) {
        sum += x;
        sum_sq += x * x;
    }
    const double abs_t = kernels::abs_t_from_sums(sum, sum_sq, d.size());
    return sum < 0 ? -abs_t : abs_t;
}

}  // namespace

double paired_t_statistic(const std::vector<double>& a, const std::vector<double>& b) {
    return signed_t(differences(a, b));
}

PermutationTestResult paired_permutation_test(const PairedSamples& samples, const PermutationOptions& options) {
    samples.validate();
    const auto d = differences(samples.a, samples.b);
    const std::size_t n = d.size();

    PermutationTestResult r;
    r.t_statistic = signed_t(d);
    if (std::all_of(d.begin(), d.end(), [](double x) { return x == 0.0; })) {
        r.t_statistic = 0.0;
        r.p_value = 1.0;
        r.exhaustive = n <= options.max_exhaustive_n;
        r.n_permutations_used = r.exhaustive ? (std::uint64_t{1} << n) : options.n_resamples;
        r.n_extreme = r.n_permutations_used;
        return r;
    }
    const double threshold = std::abs(r.t_statistic) - 1e-12;

    auto mode = options.mode;
    if (mode == PermutationMode::Auto) {
        mode = n <= options.max_exhaustive_n ? PermutationMode::Exhaustive : PermutationMode::MonteCarlo;
    }
    switch (mode) {
        case PermutationMode::Exhaustive: {
            if (n > 30) throw PreconditionError("exhaustive enumeration is limited to 30 subjects");
            r.n_permutations_used = std::uint64_t{1} << n;
            r.n_extreme = kernels::count_extreme_exhaustive(d, threshold);
            r.exhaustive = true;
            break;
        }
        case PermutationMode::MonteCarlo: {
            if (options.n_resamples == 0) throw PreconditionError("n_resamples must be positive");
            r.n_permutations_used = options.n_resamples;
            r.n_extreme = kernels::count_extreme_sampled(d, options.n_resamples, options.seed, threshold);
            break;
        }
        case PermutationMode::MonteCarloDistinct: {
            if (n > 24) throw PreconditionError("distinct resampling is limited to 24 subjects");
            const std::uint64_t total = std::uint64_t{1} << n;
            if (options.n_resamples == 0 || options.n_resamples > total) {
                throw PreconditionError("distinct resampling needs 1 ≤ n_resamples ≤ 2^n");
            }
            std::vector<std::uint64_t> masks(total);
            std::iota(masks.begin(), masks.end(), std::uint64_t{0});
            std::mt19937_64 rng(options.seed);
            std::shuffle(masks.begin(), masks.end(), rng);
            masks.resize(options.n_resamples);
            r.n_permutations_used = options.n_resamples;
            r.n_extreme = kernels::count_extreme_masks(d, masks, threshold);
            r.exhaustive = options.n_resamples == total;
            break;
        }
        case PermutationMode::Auto:
            break;
    }
    r.p_value = static_cast<double>(r.n_extreme) / static_cast<double>(r.n_permutations_used);
    return r;
}

double bonferroni(double p, std::size_t comparisons) {
    if (comparisons == 0) throw PreconditionError("comparisons must be positive");
    return std::min(1.0, p * static_cast<double>(comparisons));
}

LikertStats likert_stats(const std::vector<LikertEntry>& responses) {
    if (responses.empty()) throw PreconditionError("no Likert responses");
    LikertStats s;
    double sum = 0.0;
    for (const auto& v : responses) {
        if (!v) continue;
        if (*v < 1 || *v > 5) throw PreconditionError("Likert value out of range: " + std::to_string(*v));
        sum += *v;
        ++s.n;
    }
    if (s.n == 0) throw UndefinedValueError("every Likert response is N/A");
    s.mean = sum / static_cast<double>(s.n);
    double ss = 0.0;
    for (const auto& v : responses) {
        if (v) ss += (*v - s.mean) * (*v - s.mean);
    }
    s.sd = std::sqrt(ss / static_cast<double>(s.n));
    return s;
}

LikertEntry parse_likert(std::string_view cell, std::string_view na_token) {
    const std::string v(text::trim(cell));
    if (v.empty() || v == text::trim(na_token)) return std::nullopt;
    const std::string lower = text::to_lower_ascii(v);
    if (lower == "na" || lower == "n/a") return std::nullopt;

    static const std::pair<const char*, int> kLabels[] = {
        {"strongly disagree", 1}, {"disagree", 2}, {"neutral", 3}, {"neither agree nor disagree", 3},
        {"agree", 4},             {"strongly agree", 5}, {"never", 1}, {"rarely", 2},
        {"sometimes", 3},         {"often", 4},          {"always", 5}};
    for (const auto& [label, value] : kLabels) {
        if (lower == label) return value;
    }
    double x = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
    if (ec == std::errc{} && ptr == v.data() + v.size() && x == std::floor(x) && x >= 1 && x <= 5) {
        return static_cast<int>(x);
    }
    throw ParseError("not a Likert response: '" + v + "'");
}

double delta_percent(double ours, double theirs) {
    if (theirs == 0.0) throw UndefinedValueError("percentage difference against zero is undefined");
    return 100.0 * (ours - theirs) / theirs;
}

std::string format_delta(double percent) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", percent);
    std::string s = buf;
    if (s == "-0.0") s = "0.0";
    if (s != "0.0" && s.front() != '-') s.insert(s.begin(), '+');
    return s;
}

std::vector<ComparisonRow> comparison_table(const std::vector<SummaryRow>& ours,
                                            const std::vector<SummaryRow>& theirs) {
    if (ours.size() != theirs.size()) throw PreconditionError("comparison tables differ in length");
    std::vector<ComparisonRow> rows;
    rows.reserve(ours.size());
    for (std::size_t i = 0; i < ours.size(); ++i) {
        if (ours[i].label != theirs[i].label) {
            throw PreconditionError("row " + std::to_string(i + 1) + " labels differ: " + ours[i].label + " vs " +
                                    theirs[i].label);
        }
        rows.push_back({ours[i].label, ours[i], theirs[i], delta_percent(ours[i].mean, theirs[i].mean),
                        delta_percent(ours[i].sd, theirs[i].sd)});
    }
    return rows;
}

std::string render_comparison_table(const std::vector<ComparisonRow>& rows) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %8s %8s %8s %8s %8s %8s\n", "Item", "mu", "sigma", "mu'", "sigma'",
                  "dmu%", "dsigma%");
    out << line;
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-10s %8.2f %8.2f %8.2f %8.2f %8s %8s\n", r.label.c_str(), r.ours.mean,
                      r.ours.sd, r.theirs.mean, r.theirs.sd, format_delta(r.delta_mean).c_str(),
                      format_delta(r.delta_sd).c_str());
        out << line;
    }
    return out.str();
}

std::size_t CsvTable::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw PreconditionError("CSV has no column '" + std::string(name) + "'");
}

std::vector<std::string> CsvTable::column_values(std::string_view name) const {
    const auto c = column(name);
    std::vector<std::string> out;
    out.reserve(rows.size());
    for (const auto& row : rows) out.push_back(c < row.size() ? row[c] : std::string{});
    return out;
}

CsvTable read_csv(std::istream& in) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool quoted = false, field_started = false;
    char ch;
    auto end_field = [&] {
        record.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_record = [&] {
        end_field();
        if (!(record.size() == 1 && record[0].empty())) records.push_back(std::move(record));
        record.clear();
    };
    while (in.get(ch)) {
        if (quoted) {
            if (ch == '"') {
                if (in.peek() == '"') {
                    in.get(ch);
                    field += '"';
                } else {
                    quoted = false;
                }
            } else {
                field += ch;
            }
        } else if (ch == '"' && !field_started) {
            quoted = true;
            field_started = true;
        } else if (ch == ',') {
            end_field();
        } else if (ch == '\n') {
            end_record();
        } else if (ch != '\r') {
            field += ch;
            field_started = true;
        }
    }
    if (quoted) throw ParseError("CSV ends inside a quoted field");
    if (!field.empty() || !record.empty()) end_record();
    if (records.empty()) throw ParseError("CSV has no header row");

    CsvTable t;
    t.header = std::move(records.front());
    for (auto& h : t.header) h = text::trim(h);
    if (!t.header.empty() && t.header[0].rfind("\xEF\xBB\xBF", 0) == 0) t.header[0].erase(0, 3);
    t.rows.assign(std::make_move_iterator(records.begin() + 1), std::make_move_iterator(records.end()));
    return t;
}

CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot read " + path);
    return read_csv(in);
}

std::vector<double> numeric_column(const CsvTable& table, std::string_view name) {
    std::vector<double> out;
    const auto values = table.column_values(name);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const std::string v(text::trim(values[i]));
        double x = 0.0;
        const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
        if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size()) {
            throw ParseError("row " + std::to_string(i + 2) + " column " + std::string(name) + ": '" + v +
                             "' is not a number");
        }
        out.push_back(x);
    }
    return out;
}

std::vector<SummaryRow> read_summary_csv(const std::string& path) {
    const auto t = read_csv_file(path);
    const auto labels = t.column_values("label");
    const auto means = numeric_column(t, "mean");
    const auto sds = numeric_column(t, "sd");
    std::vector<double> ns(labels.size(), 0.0);
    if (std::find(t.header.begin(), t.header.end(), "n") != t.header.end()) ns = numeric_column(t, "n");
    std::vector<SummaryRow> rows;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        rows.push_back({std::string(text::trim(labels[i])), means[i], sds[i], static_cast<std::size_t>(ns[i])});
    }
    return rows;
}

}  // namespace aita
