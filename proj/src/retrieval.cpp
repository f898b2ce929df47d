#include "aita/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "aita/errors.hpp"
#include "aita/kernels.hpp"
#include "aita/text.hpp"

namespace aita {

namespace {

std::vector<std::string> distinct_terms(std::string_view query) {
    auto terms = text::tokenize(query);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    return terms;
}

// Descending score, then ascending chunk_id.
RankedList top_k(const IndexSnapshot& snapshot, const std::vector<double>& scores, std::size_t k, bool positive_only) {
    RankedList all;
    all.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (positive_only && !(scores[i] > 0.0)) continue;
        all.push_back({static_cast<std::uint32_t>(i), scores[i]});
    }
    auto better = [&snapshot](const ScoredChunk& a, const ScoredChunk& b) {
        if (a.score != b.score) return a.score > b.score;
        return snapshot.chunk(a.index).chunk_id < snapshot.chunk(b.index).chunk_id;
    };
    const std::size_t keep = std::min(k, all.size());
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), better);
    all.resize(keep);
    return all;
}

}  // namespace

double bm25_idf(std::size_t n_docs, std::size_t doc_freq) {
    const double n = static_cast<double>(n_docs);
    const double df = static_cast<double>(doc_freq);
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

std::vector<double> keyword_scores(const IndexSnapshot& snapshot, std::string_view query, const Bm25Params& params) {
    std::vector<double> scores(snapshot.size(), 0.0);
    if (snapshot.is_empty()) return scores;
    std::vector<kernels::TermPostings> terms;
    for (const auto& term : distinct_terms(query)) {
        if (const auto* list = snapshot.postings(term)) {
            terms.push_back({list->chunks, list->term_freqs, bm25_idf(snapshot.size(), list->chunks.size())});
        }
    }
    kernels::bm25_accumulate(terms, snapshot.doc_lengths(), snapshot.avg_doc_length(), params.k1, params.b, scores);
    return scores;
}

RankedList keyword_search(const IndexSnapshot& snapshot, std::string_view query, std::size_t k,
                          const Bm25Params& params) {
    return top_k(snapshot, keyword_scores(snapshot, query, params), k, true);
}

std::vector<double> vector_scores(const IndexSnapshot& snapshot, std::span<const double> query_vector) {
    if (snapshot.is_empty()) return {};
    if (query_vector.size() != snapshot.embedding_dim()) {
        throw PreconditionError("query vector has dimension " + std::to_string(query_vector.size()) +
                                ", snapshot has " + std::to_string(snapshot.embedding_dim()));
    }
    std::vector<double> scores(snapshot.size(), 0.0);
    kernels::cosine_scores(snapshot.vector_matrix(), snapshot.embedding_dim(), query_vector, scores);
    return scores;
}

RankedList vector_search(const IndexSnapshot& snapshot, std::span<const double> query_vector, std::size_t k) {
    return top_k(snapshot, vector_scores(snapshot, query_vector), k, false);
}

std::vector<FusedCandidate> fuse_rrf(const IndexSnapshot& snapshot, const RankedList& keyword_ranked,
                                     const RankedList& vector_ranked, int rrf_k) {
    if (rrf_k <= 0) throw PreconditionError("rrf_k must be positive");
    std::unordered_map<std::uint32_t, FusedCandidate> by_chunk;
    for (std::size_t r = 0; r < keyword_ranked.size(); ++r) {
        auto& c = by_chunk[keyword_ranked[r].index];
        c.index = keyword_ranked[r].index;
        c.keyword_score = keyword_ranked[r].score;
        c.keyword_rank = r + 1;
        c.rrf_score += 1.0 / static_cast<double>(rrf_k + static_cast<int>(r + 1));
    }
    for (std::size_t r = 0; r < vector_ranked.size(); ++r) {
        auto& c = by_chunk[vector_ranked[r].index];
        c.index = vector_ranked[r].index;
        c.vector_score = vector_ranked[r].score;
        c.vector_rank = r + 1;
        c.rrf_score += 1.0 / static_cast<double>(rrf_k + static_cast<int>(r + 1));
    }
    std::vector<FusedCandidate> out;
    out.reserve(by_chunk.size());
    for (auto& [index, c] : by_chunk) {
        c.fused_score = c.rrf_score;
        out.push_back(c);
    }
    std::sort(out.begin(), out.end(), [&snapshot](const FusedCandidate& a, const FusedCandidate& b) {
        if (a.fused_score != b.fused_score) return a.fused_score > b.fused_score;
        return snapshot.chunk(a.index).chunk_id < snapshot.chunk(b.index).chunk_id;
    });
    return out;
}

std::vector<double> TermOverlapReranker::score(std::string_view query, const IndexSnapshot& snapshot,
                                               std::span<const FusedCandidate> candidates) {
    const auto q = distinct_terms(query);
    std::vector<double> out(candidates.size(), 0.0);
    if (q.empty()) return out;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const auto chunk_terms = distinct_terms(snapshot.chunk(candidates[i].index).text);
        std::size_t shared = 0;
        for (const auto& t : q) {
            if (std::binary_search(chunk_terms.begin(), chunk_terms.end(), t)) ++shared;
        }
        out[i] = static_cast<double>(shared) / static_cast<double>(q.size());
    }
    return out;
}

std::vector<double> LlmReranker::score(std::string_view query, const IndexSnapshot& snapshot,
                                       std::span<const FusedCandidate> candidates) {
    if (candidates.empty()) return {};
    std::ostringstream user;
    user << "Question: " << query << "\n\n";
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        user << "Passage " << (i + 1) << ":\n" << snapshot.chunk(candidates[i].index).text << "\n\n";
    }
    ChatRequest request;
    request.model_id = model_id_;
    request.temperature = 0.0;
    request.max_output_tokens = static_cast<int>(16 * candidates.size() + 16);
    request.messages = {
        {Role::system,
         "Rate how useful each passage is for answering the question. Reply with exactly one line per "
         "passage in the form '<passage number>: <score from 0 to 10>' and nothing else."},
        {Role::user, user.str()}};
    const auto reply = gateway_->chat(request).content;

    static const std::regex line(R"((\d+)\s*[:=-]\s*(\d+(?:\.\d+)?))");
    std::vector<double> out(candidates.size(), std::nan(""));
    for (auto it = std::sregex_iterator(reply.begin(), reply.end(), line); it != std::sregex_iterator(); ++it) {
        const auto n = std::stoul((*it)[1].str());
        const double s = std::stod((*it)[2].str());
        if (n >= 1 && n <= out.size()) out[n - 1] = std::clamp(s, 0.0, 10.0) / 10.0;
    }
    for (double s : out) {
        if (std::isnan(s)) throw Error("re-ranking reply did not score every passage");
    }
    return out;
}

std::vector<FusedCandidate> rerank(std::vector<FusedCandidate> fused, std::string_view query,
                                   const IndexSnapshot& snapshot, Reranker& reranker, double weight) {
    if (fused.empty()) return fused;
    std::vector<double> scores;
    try {
        scores = reranker.score(query, snapshot, fused);
    } catch (const std::exception& e) {
        spdlog::warn("re-ranker failed ({}); keeping fused order", e.what());
        return fused;
    }
    if (scores.size() != fused.size() ||
        std::any_of(scores.begin(), scores.end(), [](double s) { return !std::isfinite(s); })) {
        spdlog::warn("re-ranker returned unusable scores; keeping fused order");
        return fused;
    }
    for (std::size_t i = 0; i < fused.size(); ++i) {
        fused[i].rerank_score = scores[i];
        fused[i].fused_score = fused[i].rrf_score + weight * scores[i];
    }
    std::stable_sort(fused.begin(), fused.end(),
                     [](const FusedCandidate& a, const FusedCandidate& b) { return a.fused_score > b.fused_score; });
    return fused;
}

Retrieval retrieve(const IndexSnapshot& snapshot, std::string_view query, Gateway& gateway,
                   const RetrievalOptions& options) {
    if (options.k == 0) throw PreconditionError("k must be positive");
    Retrieval out;
    if (snapshot.is_empty() || text::is_blank(query)) return out;

    const std::size_t pool = 2 * options.k;
    const auto kw_scores = keyword_scores(snapshot, query, options.bm25);
    const auto kw_ranked = top_k(snapshot, kw_scores, pool, true);

    std::vector<double> vec_scores;
    RankedList vec_ranked;
    std::optional<Embedding> query_vector;
    try {
        query_vector = gateway.embed({std::string(query)}).front();
    } catch (const std::exception& e) {
        spdlog::warn("query embedding failed ({}); falling back to keyword-only retrieval", e.what());
        out.degraded = true;
    }
    if (query_vector) {
        if (query_vector->size() != snapshot.embedding_dim()) {
            throw ConfigError("embedding backend dimension " + std::to_string(query_vector->size()) +
                              " does not match the snapshot's " + std::to_string(snapshot.embedding_dim()));
        }
        vec_scores = vector_scores(snapshot, *query_vector);
        vec_ranked = top_k(snapshot, vec_scores, pool, false);
    }

    auto fused = fuse_rrf(snapshot, kw_ranked, vec_ranked, options.rrf_k);
    TermOverlapReranker default_reranker;
    Reranker& reranker = options.reranker ? *options.reranker : default_reranker;
    fused = rerank(std::move(fused), query, snapshot, reranker, options.rerank_weight);
    if (fused.size() > options.k) fused.resize(options.k);

    out.results.reserve(fused.size());
    for (std::size_t r = 0; r < fused.size(); ++r) {
        const auto& c = fused[r];
        RetrievalResult res;
        res.chunk = snapshot.chunk(c.index);
        res.keyword_score = kw_scores[c.index];
        res.vector_score = vec_scores.empty() ? 0.0 : vec_scores[c.index];
        res.fused_score = c.fused_score;
        res.final_rank = r + 1;
        res.rrf_score = c.rrf_score;
        res.rerank_score = c.rerank_score;
        out.results.push_back(std::move(res));
    }
    return out;
}

}  // namespace aita
