#include "aita/kernels.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "aita/errors.hpp"

namespace aita::kernels {

namespace {

double cosine_row(const double* row, std::span<const double> query, double query_norm) {
    const std::size_t dim = query.size();
    double dot = 0.0;
    double norm = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
        dot += row[j] * query[j];
        norm += row[j] * row[j];
    }
    if (norm == 0.0 || query_norm == 0.0) return 0.0;
    return dot / (std::sqrt(norm) * query_norm);
}

double norm_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

void check_cosine_shapes(std::span<const double> matrix, std::size_t dim, std::span<const double> query,
                         std::span<double> out) {
    if (query.size() != dim) throw PreconditionError("query dimension does not match the matrix");
    if (matrix.size() != out.size() * dim) throw PreconditionError("matrix/output size mismatch");
}

double bm25_term(double idf, double tf, double doc_len, double avg_len, double k1, double b) {
    return idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * doc_len / avg_len));
}

double flipped_sum(std::span<const double> d, std::uint64_t mask) {
    double s = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) s += ((mask >> i) & 1U) ? -d[i] : d[i];
    return s;
}

double sum_of_squares(std::span<const double> d) {
    double s = 0.0;
    for (double x : d) s += x * x;
    return s;
}

std::mt19937_64 block_generator(std::uint64_t seed, std::uint64_t block) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(block >> 32)};
    return std::mt19937_64(seq);
}

// Draws one random sign vector from gen and returns the flipped sum.
double sampled_flip_sum(std::span<const double> d, std::mt19937_64& gen) {
    double s = 0.0;
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (i % 64 == 0) bits = gen();
        s += (bits & 1U) ? -d[i] : d[i];
        bits >>= 1;
    }
    return s;
}

std::uint64_t count_block(std::span<const double> d, std::uint64_t block, std::uint64_t n_resamples,
                          std::uint64_t seed, double sum_sq, double threshold) {
    auto gen = block_generator(seed, block);
    const std::uint64_t begin = block * kSampleBlock;
    const std::uint64_t end = std::min(n_resamples, begin + kSampleBlock);
    std::uint64_t count = 0;
    for (std::uint64_t r = begin; r < end; ++r) {
        if (abs_t_from_sums(sampled_flip_sum(d, gen), sum_sq, d.size()) >= threshold) ++count;
    }
    return count;
}

}  // namespace

void cosine_scores(std::span<const double> matrix, std::size_t dim, std::span<const double> query,
                   std::span<double> out) {
    check_cosine_shapes(matrix, dim, query, out);
    const double qn = norm_of(query);
    const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        out[i] = cosine_row(matrix.data() + static_cast<std::size_t>(i) * dim, query, qn);
    }
}

void cosine_scores_serial(std::span<const double> matrix, std::size_t dim, std::span<const double> query,
                          std::span<double> out) {
    check_cosine_shapes(matrix, dim, query, out);
    const double qn = norm_of(query);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = cosine_row(matrix.data() + i * dim, query, qn);
}

void bm25_accumulate(std::span<const TermPostings> terms, std::span<const std::uint32_t> doc_lengths,
                     double avg_doc_length, double k1, double b, std::span<double> scores) {
    for (const auto& term : terms) {
        const auto n = static_cast<std::int64_t>(term.chunks.size());
        // A chunk appears at most once per term, so writes within one term never collide.
#pragma omp parallel for schedule(static)
        for (std::int64_t j = 0; j < n; ++j) {
            const auto c = term.chunks[j];
            scores[c] += bm25_term(term.idf, term.term_freqs[j], doc_lengths[c], avg_doc_length, k1, b);
        }
    }
}

void bm25_accumulate_serial(std::span<const TermPostings> terms, std::span<const std::uint32_t> doc_lengths,
                            double avg_doc_length, double k1, double b, std::span<double> scores) {
    for (const auto& term : terms) {
        for (std::size_t j = 0; j < term.chunks.size(); ++j) {
            const auto c = term.chunks[j];
            scores[c] += bm25_term(term.idf, term.term_freqs[j], doc_lengths[c], avg_doc_length, k1, b);
        }
    }
}

double abs_t_from_sums(double sum, double sum_sq, std::size_t n) {
    const double nd = static_cast<double>(n);
    const double mean = sum / nd;
    const double var = (sum_sq - sum * mean) / (nd - 1.0);
    if (!(var > 0.0)) return sum == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::abs(mean) / std::sqrt(var / nd);
}

std::uint64_t count_extreme_exhaustive(std::span<const double> d, double threshold) {
    if (d.size() > 62) throw PreconditionError("exhaustive enumeration limited to n <= 62");
    const double sum_sq = sum_of_squares(d);
    const auto total = static_cast<std::int64_t>(std::uint64_t{1} << d.size());
    std::uint64_t count = 0;
#pragma omp parallel for schedule(static) reduction(+ : count)
    for (std::int64_t mask = 0; mask < total; ++mask) {
        if (abs_t_from_sums(flipped_sum(d, static_cast<std::uint64_t>(mask)), sum_sq, d.size()) >= threshold) {
            ++count;
        }
    }
    return count;
}

std::uint64_t count_extreme_exhaustive_serial(std::span<const double> d, double threshold) {
    if (d.size() > 62) throw PreconditionError("exhaustive enumeration limited to n <= 62");
    const double sum_sq = sum_of_squares(d);
    const std::uint64_t total = std::uint64_t{1} << d.size();
    std::uint64_t count = 0;
    for (std::uint64_t mask = 0; mask < total; ++mask) {
        if (abs_t_from_sums(flipped_sum(d, mask), sum_sq, d.size()) >= threshold) ++count;
    }
    return count;
}

std::uint64_t count_extreme_masks(std::span<const double> d, std::span<const std::uint64_t> masks,
                                  double threshold) {
    if (d.size() > 64) throw PreconditionError("sign masks limited to n <= 64");
    const double sum_sq = sum_of_squares(d);
    const auto total = static_cast<std::int64_t>(masks.size());
    std::uint64_t count = 0;
#pragma omp parallel for schedule(static) reduction(+ : count)
    for (std::int64_t i = 0; i < total; ++i) {
        if (abs_t_from_sums(flipped_sum(d, masks[i]), sum_sq, d.size()) >= threshold) ++count;
    }
    return count;
}

std::uint64_t count_extreme_masks_serial(std::span<const double> d, std::span<const std::uint64_t> masks,
                                         double threshold) {
    if (d.size() > 64) throw PreconditionError("sign masks limited to n <= 64");
    const double sum_sq = sum_of_squares(d);
    std::uint64_t count = 0;
    for (auto mask : masks) {
        if (abs_t_from_sums(flipped_sum(d, mask), sum_sq, d.size()) >= threshold) ++count;
    }
    return count;
}

std::uint64_t count_extreme_sampled(std::span<const double> d, std::uint64_t n_resamples, std::uint64_t seed,
                                    double threshold) {
    const double sum_sq = sum_of_squares(d);
    const auto blocks = static_cast<std::int64_t>((n_resamples + kSampleBlock - 1) / kSampleBlock);
    std::uint64_t count = 0;
#pragma omp parallel for schedule(dynamic) reduction(+ : count)
    for (std::int64_t block = 0; block < blocks; ++block) {
        count += count_block(d, static_cast<std::uint64_t>(block), n_resamples, seed, sum_sq, threshold);
    }
    return count;
}

std::uint64_t count_extreme_sampled_serial(std::span<const double> d, std::uint64_t n_resamples,
                                           std::uint64_t seed, double threshold) {
    const double sum_sq = sum_of_squares(d);
    const std::uint64_t blocks = (n_resamples + kSampleBlock - 1) / kSampleBlock;
    std::uint64_t count = 0;
    for (std::uint64_t block = 0; block < blocks; ++block) {
        count += count_block(d, block, n_resamples, seed, sum_sq, threshold);
    }
    return count;
}

}  // namespace aita::kernels
