#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aita/gateway.hpp"
#include "aita/snapshot.hpp"

namespace aita {

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// ln(1 + (N - df + 0.5) / (df + 0.5)); always positive.
double bm25_idf(std::size_t n_docs, std::size_t doc_freq);

struct ScoredChunk {
    std::uint32_t index = 0;  // position in the snapshot
    double score = 0.0;
};

/// Rank 1 first.
using RankedList = std::vector<ScoredChunk>;

/// BM25 over distinct query terms. Only chunks with score > 0, at most k,
/// ties broken by ascending chunk_id.
RankedList keyword_search(const IndexSnapshot& snapshot, std::string_view query, std::size_t k,
                          const Bm25Params& params = {});

/// BM25 score of every chunk, indexed by snapshot position.
std::vector<double> keyword_scores(const IndexSnapshot& snapshot, std::string_view query,
                                   const Bm25Params& params = {});

/// Exact top-k by cosine similarity, ties by ascending chunk_id. Throws
/// PreconditionError when the query dimension differs from the snapshot's.
RankedList vector_search(const IndexSnapshot& snapshot, std::span<const double> query_vector, std::size_t k);

std::vector<double> vector_scores(const IndexSnapshot& snapshot, std::span<const double> query_vector);

/// One candidate moving through fusion and re-ranking.
struct FusedCandidate {
    std::uint32_t index = 0;
    double keyword_score = 0.0;
    double vector_score = 0.0;
    std::size_t keyword_rank = 0;  // 0 = absent from that list
    std::size_t vector_rank = 0;
    double rrf_score = 0.0;     // Σ 1/(rrf_k + rank)
    double rerank_score = 0.0;  // raw re-ranker output
    double fused_score = 0.0;   // ranking key: rrf_score, plus weight·rerank_score after rerank()
};

/// Reciprocal-rank fusion: descending score, ties by ascending chunk_id.
std::vector<FusedCandidate> fuse_rrf(const IndexSnapshot& snapshot, const RankedList& keyword_ranked,
                                     const RankedList& vector_ranked, int rrf_k = 60);

/// Scores candidates for a query. One score per candidate, finite.
class Reranker {
public:
    virtual ~Reranker() = default;
    virtual std::vector<double> score(std::string_view query, const IndexSnapshot& snapshot,
                                      std::span<const FusedCandidate> candidates) = 0;
};

/// |query terms ∩ chunk terms| / |query terms|, over distinct terms.
class TermOverlapReranker final : public Reranker {
public:
    std::vector<double> score(std::string_view query, const IndexSnapshot& snapshot,
                              std::span<const FusedCandidate> candidates) override;
};

/// Asks a chat model to rate each passage from 0 to 10 (reported as 0..1).
class LlmReranker final : public Reranker {
public:
    LlmReranker(std::shared_ptr<Gateway> gateway, std::string model_id)
        : gateway_(std::move(gateway)), model_id_(std::move(model_id)) {}

    std::vector<double> score(std::string_view query, const IndexSnapshot& snapshot,
                              std::span<const FusedCandidate> candidates) override;

private:
    std::shared_ptr<Gateway> gateway_;
    std::string model_id_;
};

/// Stable re-order by fused_score + weight·rerank_score. If the re-ranker throws
/// or returns unusable scores, the fused order is returned unchanged and a
/// warning is logged.
std::vector<FusedCandidate> rerank(std::vector<FusedCandidate> fused, std::string_view query,
                                   const IndexSnapshot& snapshot, Reranker& reranker, double weight = 0.5);

struct RetrievalResult {
    Chunk chunk;
    double keyword_score = 0.0;
    double vector_score = 0.0;
    double fused_score = 0.0;  // final ranking score
    std::size_t final_rank = 0;
    double rrf_score = 0.0;
    double rerank_score = 0.0;
};

struct RetrievalOptions {
    std::size_t k = 10;
    int rrf_k = 60;
    double rerank_weight = 0.5;
    Bm25Params bm25;
    std::shared_ptr<Reranker> reranker;  // null → TermOverlapReranker
};

struct Retrieval {
    std::vector<RetrievalResult> results;
    bool degraded = false;  // query embedding failed; keyword-only
};

/// embed(query) → keyword and vector search (pools of 2k each) → fuse_rrf →
/// rerank → first k.
Retrieval retrieve(const IndexSnapshot& snapshot, std::string_view query, Gateway& gateway,
                   const RetrievalOptions& options = {});

}  // namespace aita
