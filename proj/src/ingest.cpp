#include "aita/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <regex>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "aita/errors.hpp"
#include "aita/text.hpp"

namespace aita {

namespace {

constexpr std::size_t kEmbedBatch = 64;

std::string_view strip_cr(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

struct Window {
    std::size_t begin;  // code points
    std::size_t end;
};

std::vector<Window> windows_for(std::size_t length, const ChunkPolicy& policy) {
    std::vector<Window> out;
    if (length == 0) return out;
    const std::size_t step = policy.max_chars - policy.overlap_chars;
    for (std::size_t start = 0;; start += step) {
        const std::size_t end = std::min(start + policy.max_chars, length);
        out.push_back({start, end});
        if (end == length) break;
    }
    return out;
}

// A contiguous run of text with the unit each code point came from.
struct Span {
    std::string text;
    std::vector<std::size_t> offsets;  // code point -> byte offset, plus a sentinel
    std::vector<int> unit_at;          // code point -> unit number
};

void emit_windows(const SourceDocument& doc, const Span& span, const ChunkPolicy& policy,
                  std::map<int, int>& next_ordinal, std::vector<Chunk>& out) {
    const std::size_t length = span.offsets.size() - 1;
    for (const auto& w : windows_for(length, policy)) {
        std::string piece = span.text.substr(span.offsets[w.begin], span.offsets[w.end] - span.offsets[w.begin]);
        const int unit = span.unit_at[w.begin];
        if (text::is_blank(piece)) {
            spdlog::warn("{}: skipping blank chunk in unit {}", doc.path, unit);
            continue;
        }
        Chunk c;
        c.source_path = doc.path;
        c.unit_number = unit;
        c.ordinal = next_ordinal[unit]++;
        c.text = std::move(piece);
        c.chunk_id = make_chunk_id(c.source_path, c.unit_number, c.ordinal, c.text);
        out.push_back(std::move(c));
    }
}

void check_unique_paths(const std::vector<SourceDocument>& docs) {
    std::set<std::string> seen;
    std::set<std::string> dupes;
    for (const auto& d : docs) {
        if (!seen.insert(d.path).second) dupes.insert(d.path);
    }
    if (!dupes.empty()) {
        std::string msg = "duplicate document path(s):";
        for (const auto& p : dupes) msg += " " + p;
        throw PreconditionError(msg);
    }
}

std::vector<Chunk> chunk_all(const std::vector<SourceDocument>& docs, const ChunkPolicy& policy) {
    policy.validate();
    check_unique_paths(docs);
    std::vector<Chunk> chunks;
    for (const auto& d : docs) {
        auto part = chunk_document(d, policy);
        chunks.insert(chunks.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return chunks;
}

void embed_chunks(std::vector<Chunk>& chunks, Gateway& gateway) {
    for (std::size_t begin = 0; begin < chunks.size(); begin += kEmbedBatch) {
        const std::size_t end = std::min(chunks.size(), begin + kEmbedBatch);
        std::vector<std::string> texts;
        texts.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) texts.push_back(chunks[i].text);
        auto vectors = gateway.embed(texts);
        for (std::size_t i = begin; i < end; ++i) chunks[i].embedding = std::move(vectors[i - begin]);
    }
}

}  // namespace

std::string_view to_string(DocumentKind kind) {
    switch (kind) {
        case DocumentKind::slides: return "slides";
        case DocumentKind::transcript: return "transcript";
        case DocumentKind::script: return "script";
        case DocumentKind::announcement: return "announcement";
        case DocumentKind::other: return "other";
    }
    return "other";
}

DocumentKind document_kind_from_string(std::string_view s) {
    const auto lower = text::to_lower_ascii(text::trim(s));
    if (lower == "slides") return DocumentKind::slides;
    if (lower == "transcript") return DocumentKind::transcript;
    if (lower == "script") return DocumentKind::script;
    if (lower == "announcement") return DocumentKind::announcement;
    if (lower == "other") return DocumentKind::other;
    throw ParseError("unknown document kind '" + std::string(s) + "'");
}

void validate(const SourceDocument& doc) {
    if (doc.path.empty()) throw PreconditionError("document path is empty");
    int previous = 0;
    for (const auto& u : doc.units) {
        if (u.number <= previous) {
            throw PreconditionError(doc.path + ": unit numbers must be positive and strictly increasing (" +
                                    std::to_string(u.number) + " after " + std::to_string(previous) + ")");
        }
        previous = u.number;
    }
}

void ChunkPolicy::validate() const {
    if (max_chars == 0) throw PreconditionError("max_chars must be positive");
    if (overlap_chars >= max_chars) throw PreconditionError("overlap_chars must be smaller than max_chars");
}

std::vector<Chunk> chunk_document(const SourceDocument& doc, const ChunkPolicy& policy) {
    validate(doc);
    policy.validate();

    std::vector<Chunk> out;
    std::map<int, int> next_ordinal;

    auto append_unit = [&doc](Span& span, const DocumentUnit& unit) {
        if (text::is_blank(unit.text)) {
            spdlog::warn("{}: unit {} is empty, skipped", doc.path, unit.number);
            return false;
        }
        if (!span.text.empty()) {
            span.text += "\n\n";
            span.unit_at.push_back(span.unit_at.back());
            span.unit_at.push_back(span.unit_at.back());
        }
        span.text += unit.text;
        span.unit_at.resize(text::code_point_length(span.text), unit.number);
        return true;
    };

    if (policy.respect_unit_boundaries) {
        for (const auto& unit : doc.units) {
            Span span;
            if (!append_unit(span, unit)) continue;
            span.offsets = text::code_point_offsets(span.text);
            emit_windows(doc, span, policy, next_ordinal, out);
        }
    } else {
        Span span;
        for (const auto& unit : doc.units) append_unit(span, unit);
        if (!span.text.empty()) {
            span.offsets = text::code_point_offsets(span.text);
            emit_windows(doc, span, policy, next_ordinal, out);
        }
    }
    return out;
}

SourceDocument parse_corpus_file(std::string_view content, const std::string& fallback_path) {
    static const std::regex marker(R"(^\s*===\s*unit\s+(\d+)\s*===\s*$)", std::regex::icase);
    static const std::regex front(R"(^(path|kind)\s*:\s*(.*?)\s*$)", std::regex::icase);

    SourceDocument doc;
    doc.path = fallback_path;

    std::vector<std::string> lines;
    {
        std::size_t pos = 0;
        while (pos <= content.size()) {
            const auto nl = content.find('\n', pos);
            const auto line = content.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
            lines.emplace_back(strip_cr(line));
            if (nl == std::string_view::npos) break;
            pos = nl + 1;
        }
    }

    bool any_marker = false;
    for (const auto& l : lines) {
        if (std::regex_match(l, marker)) {
            any_marker = true;
            break;
        }
    }

    std::vector<std::pair<int, std::string>> raw_units;
    std::string preamble;
    bool in_front_matter = true;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto& line = lines[i];
        std::smatch m;
        if (std::regex_match(line, m, marker)) {
            in_front_matter = false;
            raw_units.emplace_back(std::stoi(m[1].str()), std::string{});
            continue;
        }
        if (in_front_matter && raw_units.empty()) {
            if (std::regex_match(line, m, front)) {
                const auto key = text::to_lower_ascii(m[1].str());
                if (key == "path") {
                    doc.path = m[2].str();
                } else {
                    doc.kind = document_kind_from_string(m[2].str());
                }
                continue;
            }
            if (text::is_blank(line)) continue;
            if (any_marker) {
                throw ParseError(fallback_path + ":" + std::to_string(i + 1) + ": text before the first unit marker");
            }
            in_front_matter = false;
        }
        std::string& target = raw_units.empty() ? preamble : raw_units.back().second;
        target += line;
        target += '\n';
    }

    if (!any_marker && !text::is_blank(preamble)) raw_units.emplace_back(1, std::move(preamble));

    for (auto& [number, body] : raw_units) {
        doc.units.push_back({number, std::string(text::trim(body))});
    }
    if (doc.path.empty()) throw ParseError("corpus file has an empty path");
    try {
        validate(doc);
    } catch (const PreconditionError& e) {
        throw ParseError(e.what());
    }
    return doc;
}

std::vector<SourceDocument> load_corpus_dir(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw PreconditionError("corpus directory not found: " + dir.string());

    std::vector<fs::path> files;
    for (auto it = fs::recursive_directory_iterator(dir); it != fs::recursive_directory_iterator(); ++it) {
        const auto name = it->path().filename().string();
        if (!name.empty() && name.front() == '.') {
            if (it->is_directory()) it.disable_recursion_pending();
            continue;
        }
        if (it->is_regular_file()) files.push_back(it->path());
    }
    std::sort(files.begin(), files.end(), [&dir](const fs::path& a, const fs::path& b) {
        return fs::relative(a, dir).generic_string() < fs::relative(b, dir).generic_string();
    });

    std::vector<SourceDocument> docs;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        if (!in) throw ParseError("cannot read " + f.string());
        std::stringstream ss;
        ss << in.rdbuf();
        docs.push_back(parse_corpus_file(ss.str(), fs::relative(f, dir).generic_string()));
    }
    return docs;
}

std::shared_ptr<const IndexSnapshot> ingest_corpus(const std::vector<SourceDocument>& docs,
                                                   const ChunkPolicy& policy, Gateway& gateway,
                                                   TimePoint created_at) {
    auto chunks = chunk_all(docs, policy);
    embed_chunks(chunks, gateway);
    spdlog::info("ingested {} documents into {} chunks", docs.size(), chunks.size());
    return IndexSnapshot::build(std::move(chunks), created_at);
}

std::shared_ptr<const IndexSnapshot> update_corpus(const IndexSnapshot& base,
                                                   const std::vector<SourceDocument>& new_docs,
                                                   const ChunkPolicy& policy, Gateway& gateway,
                                                   TimePoint created_at) {
    auto fresh = chunk_all(new_docs, policy);
    embed_chunks(fresh, gateway);

    std::set<std::string> replaced;
    for (const auto& d : new_docs) replaced.insert(d.path);

    std::vector<Chunk> merged;
    for (auto& c : base.chunks_with_embeddings()) {
        if (!replaced.contains(c.source_path)) merged.push_back(std::move(c));
    }
    merged.insert(merged.end(), std::make_move_iterator(fresh.begin()), std::make_move_iterator(fresh.end()));
    return IndexSnapshot::build(std::move(merged), created_at);
}

}  // namespace aita
