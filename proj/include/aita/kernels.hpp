#pragma once

// Hot loops shared by retrieval and the permutation test. Every kernel has an
// OpenMP version and a `_serial` reference; the two must agree bit-for-bit
// (tests/unit/kernels_test.cpp) and are compared in bench/kernels_bench.cpp.

#include <cstddef>
#include <cstdint>
#include <span>

namespace aita::kernels {

/// out[i] = cos(query, row i) for a row-major n×dim matrix; 0 where either norm is 0.
void cosine_scores(std::span<const double> matrix, std::size_t dim, std::span<const double> query,
                   std::span<double> out);
void cosine_scores_serial(std::span<const double> matrix, std::size_t dim, std::span<const double> query,
                          std::span<double> out);

/// One query term's postings. chunks[j] never repeats within a term.
struct TermPostings {
    std::span<const std::uint32_t> chunks;
    std::span<const std::uint32_t> term_freqs;
    double idf = 0.0;
};

/// Adds each term's BM25 contribution to scores[chunk], term by term in order.
void bm25_accumulate(std::span<const TermPostings> terms, std::span<const std::uint32_t> doc_lengths,
                     double avg_doc_length, double k1, double b, std::span<double> scores);
void bm25_accumulate_serial(std::span<const TermPostings> terms, std::span<const std::uint32_t> doc_lengths,
                            double avg_doc_length, double k1, double b, std::span<double> scores);

/// |t| of the one-sample t statistic for differences with sum `sum` and sum of
/// squares `sum_sq` (sample variance, n-1 denominator). Zero variance yields 0
/// when the sum is 0 and +inf otherwise.
double abs_t_from_sums(double sum, double sum_sq, std::size_t n);

/// Number of sign vectors s ∈ {±1}^n (bit i set ⇒ s_i = −1), over all 2^n,
/// whose flipped |t| ≥ threshold. Requires n ≤ 62.
std::uint64_t count_extreme_exhaustive(std::span<const double> diffs, double threshold);
std::uint64_t count_extreme_exhaustive_serial(std::span<const double> diffs, double threshold);

/// Same count restricted to an explicit list of sign masks. Requires n ≤ 64.
std::uint64_t count_extreme_masks(std::span<const double> diffs, std::span<const std::uint64_t> masks,
                                  double threshold);
std::uint64_t count_extreme_masks_serial(std::span<const double> diffs, std::span<const std::uint64_t> masks,
                                         double threshold);

/// Resamples drawn with replacement. Resample r uses substream r / kSampleBlock,
/// seeded from (seed, block), so the count is independent of thread count.
inline constexpr std::uint64_t kSampleBlock = 1024;
std::uint64_t count_extreme_sampled(std::span<const double> diffs, std::uint64_t n_resamples, std::uint64_t seed,
                                    double threshold);
std::uint64_t count_extreme_sampled_serial(std::span<const double> diffs, std::uint64_t n_resamples,
                                           std::uint64_t seed, double threshold);

}  // namespace aita::kernels
