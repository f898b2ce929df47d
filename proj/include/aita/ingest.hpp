#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "aita/gateway.hpp"
#include "aita/snapshot.hpp"
#include "aita/time_util.hpp"

namespace aita {

enum class DocumentKind { slides, transcript, script, announcement, other };

std::string_view to_string(DocumentKind kind);
DocumentKind document_kind_from_string(std::string_view s);

/// A slide for slide decks; a page or section for everything else.
struct DocumentUnit {
    int number = 1;
    std::string text;
};

struct SourceDocument {
    std::string path;  // relative path, quoted verbatim in citations
    DocumentKind kind = DocumentKind::other;
    std::vector<DocumentUnit> units;
};

/// Non-empty path, positive and strictly increasing unit numbers.
void validate(const SourceDocument& doc);

struct ChunkPolicy {
    std::size_t max_chars = 2000;
    std::size_t overlap_chars = 200;
    bool respect_unit_boundaries = true;

    void validate() const;
};

/// Splits a document into chunks. Lengths are measured in UTF-8 code points.
/// Units that fit become one chunk; longer text is cut into windows of
/// max_chars advancing by max_chars - overlap_chars, the last one ending at the
/// text end. Blank units (and blank windows) are skipped with a warning.
std::vector<Chunk> chunk_document(const SourceDocument& doc, const ChunkPolicy& policy);

/// Corpus file format:
///
///     path: slides/week1.pdf
///     kind: slides
///     === unit 1 ===
///     first slide text
///     === unit 2 ===
///     ...
///
/// `path:` and `kind:` are optional front matter before the first marker; the
/// path defaults to `fallback_path`. A file without markers is a single unit 1.
SourceDocument parse_corpus_file(std::string_view content, const std::string& fallback_path);

/// Every regular, non-hidden file under `dir`, recursively, sorted by relative path.
std::vector<SourceDocument> load_corpus_dir(const std::filesystem::path& dir);

/// Chunks and embeds every document. Throws PreconditionError naming any
/// duplicated path; any embedding failure aborts without a snapshot.
std::shared_ptr<const IndexSnapshot> ingest_corpus(const std::vector<SourceDocument>& docs,
                                                   const ChunkPolicy& policy, Gateway& gateway,
                                                   TimePoint created_at = now_utc());

/// New snapshot in which documents whose path appears in `new_docs` are
/// replaced wholesale and new paths are added. `base` is not modified.
/// Chunks of untouched documents keep their stored embeddings.
std::shared_ptr<const IndexSnapshot> update_corpus(const IndexSnapshot& base,
                                                   const std::vector<SourceDocument>& new_docs,
                                                   const ChunkPolicy& policy, Gateway& gateway,
                                                   TimePoint created_at = now_utc());

}  // namespace aita
