#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "aita/gateway.hpp"
#include "aita/time_util.hpp"

namespace aita {

/// A citable excerpt of one course document.
struct Chunk {
    std::string chunk_id;
    std::string source_path;
    int unit_number = 1;
    int ordinal = 0;
    std::string text;
    std::optional<Embedding> embedding;

    bool operator==(const Chunk&) const = default;
};

/// Stable id: the first 16 hex digits of sha256(path, unit, ordinal, text).
std::string make_chunk_id(const std::string& source_path, int unit_number, int ordinal, const std::string& text);

struct PostingList {
    std::vector<std::uint32_t> chunks;      // ascending snapshot positions
    std::vector<std::uint32_t> term_freqs;  // parallel to chunks
};

/// Immutable hybrid index: keyword postings plus a dense vector store over one
/// chunk set. Chunks are kept in canonical (source_path, unit_number, ordinal)
/// order regardless of input order. Embeddings live only in the vector matrix;
/// the stored Chunk objects have `embedding` unset.
class IndexSnapshot {
public:
    static constexpr int kFormatVersion = 1;

    /// Every chunk must carry an embedding of one common dimension. Throws
    /// PreconditionError on missing or ragged embeddings and on duplicate
    /// (source_path, unit_number, ordinal) or chunk_id.
    static std::shared_ptr<const IndexSnapshot> build(std::vector<Chunk> chunks, TimePoint created_at);

    static std::shared_ptr<const IndexSnapshot> empty(TimePoint created_at);

    std::size_t size() const { return chunks_.size(); }
    bool is_empty() const { return chunks_.empty(); }
    const std::vector<Chunk>& chunks() const { return chunks_; }
    const Chunk& chunk(std::size_t i) const { return chunks_.at(i); }

    std::size_t embedding_dim() const { return dim_; }
    std::span<const double> vector(std::size_t i) const;
    std::span<const double> vector_matrix() const { return vectors_; }

    /// nullptr when the term does not occur.
    const PostingList* postings(const std::string& term) const;
    std::size_t vocabulary_size() const { return postings_.size(); }
    std::vector<std::string> vocabulary() const;  // sorted

    std::span<const std::uint32_t> doc_lengths() const { return doc_lengths_; }
    double avg_doc_length() const { return avg_doc_length_; }

    TimePoint created_at() const { return created_at_; }
    const std::string& content_hash() const { return content_hash_; }

    /// Chunks again, each with its embedding restored.
    std::vector<Chunk> chunks_with_embeddings() const;

    /// Re-derives every invariant (postings, lengths, hash) and throws
    /// DataIntegrityError on any mismatch.
    void validate() const;

    nlohmann::json to_json() const;
    /// Verifies format, version, chunk ids and content hash; throws ParseError.
    static std::shared_ptr<const IndexSnapshot> from_json(const nlohmann::json& j);

    void save(const std::filesystem::path& path) const;
    static std::shared_ptr<const IndexSnapshot> load(const std::filesystem::path& path);

private:
    IndexSnapshot() = default;

    std::vector<Chunk> chunks_;
    std::size_t dim_ = 0;
    std::vector<double> vectors_;
    std::unordered_map<std::string, PostingList> postings_;
    std::vector<std::uint32_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
    TimePoint created_at_{};
    std::string content_hash_;
};

/// Hash over chunk ids, metadata, text and the exact bit patterns of the
/// embeddings, in canonical order. Independent of the creation timestamp.
std::string compute_content_hash(const std::vector<Chunk>& chunks, std::span<const double> vectors,
                                 std::size_t dim);

}  // namespace aita
