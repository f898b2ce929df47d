#include "aita/snapshot.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "aita/errors.hpp"
#include "aita/hashing.hpp"
#include "aita/text.hpp"

namespace aita {

using nlohmann::json;

namespace {

constexpr const char* kFormatName = "aita-index-snapshot";

bool canonical_less(const Chunk& a, const Chunk& b) {
    if (a.source_path != b.source_path) return a.source_path < b.source_path;
    if (a.unit_number != b.unit_number) return a.unit_number < b.unit_number;
    return a.ordinal < b.ordinal;
}

struct Derived {
    std::unordered_map<std::string, PostingList> postings;
    std::vector<std::uint32_t> doc_lengths;
    double avg_doc_length = 0.0;
};

Derived derive_keyword_index(const std::vector<Chunk>& chunks) {
    Derived d;
    d.doc_lengths.reserve(chunks.size());
    std::uint64_t total = 0;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        const auto terms = text::tokenize(chunks[i].text);
        d.doc_lengths.push_back(static_cast<std::uint32_t>(terms.size()));
        total += terms.size();
        std::map<std::string, std::uint32_t> tf;
        for (const auto& t : terms) ++tf[t];
        for (const auto& [term, freq] : tf) {
            auto& list = d.postings[term];
            list.chunks.push_back(static_cast<std::uint32_t>(i));
            list.term_freqs.push_back(freq);
        }
    }
    if (!chunks.empty()) d.avg_doc_length = static_cast<double>(total) / static_cast<double>(chunks.size());
    return d;
}

std::string hex_bits(double x) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(std::bit_cast<std::uint64_t>(x)));
    return buf;
}

}  // namespace

std::string make_chunk_id(const std::string& source_path, int unit_number, int ordinal, const std::string& text) {
    std::string key;
    key.reserve(source_path.size() + text.size() + 32);
    key += source_path;
    key += '\x1f';
    key += std::to_string(unit_number);
    key += '\x1f';
    key += std::to_string(ordinal);
    key += '\x1f';
    key += text;
    return sha256_hex(key).substr(0, 16);
}

std::string compute_content_hash(const std::vector<Chunk>& chunks, std::span<const double> vectors,
                                 std::size_t dim) {
    std::string buf = "dim=" + std::to_string(dim) + "\n";
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        const auto& c = chunks[i];
        buf += c.chunk_id;
        buf += '\x1f';
        buf += c.source_path;
        buf += '\x1f';
        buf += std::to_string(c.unit_number);
        buf += '\x1f';
        buf += std::to_string(c.ordinal);
        buf += '\x1f';
        buf += c.text;
        buf += '\x1f';
        for (std::size_t j = 0; j < dim; ++j) buf += hex_bits(vectors[i * dim + j]);
        buf += '\x1e';
    }
    return sha256_hex(buf);
}

std::shared_ptr<const IndexSnapshot> IndexSnapshot::build(std::vector<Chunk> chunks, TimePoint created_at) {
    std::sort(chunks.begin(), chunks.end(), canonical_less);

    std::set<std::string> ids;
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        const auto& c = chunks[i];
        if (i > 0 && !canonical_less(chunks[i - 1], c)) {
            throw PreconditionError("duplicate chunk position " + c.source_path + " unit " +
                                    std::to_string(c.unit_number) + " ordinal " + std::to_string(c.ordinal));
        }
        if (!ids.insert(c.chunk_id).second) throw PreconditionError("duplicate chunk id " + c.chunk_id);
        if (c.text.empty()) throw PreconditionError("chunk " + c.chunk_id + " has empty text");
        if (c.unit_number <= 0 || c.ordinal < 0) {
            throw PreconditionError("chunk " + c.chunk_id + " has an invalid unit/ordinal");
        }
        if (!c.embedding) throw PreconditionError("chunk " + c.chunk_id + " has no embedding");
    }

    std::shared_ptr<IndexSnapshot> s(new IndexSnapshot());
    s->created_at_ = created_at;
    s->dim_ = chunks.empty() ? 0 : chunks.front().embedding->size();
    if (!chunks.empty() && s->dim_ == 0) throw PreconditionError("embeddings must be non-empty");
    s->vectors_.reserve(chunks.size() * s->dim_);
    for (auto& c : chunks) {
        if (c.embedding->size() != s->dim_) {
            throw PreconditionError("chunk " + c.chunk_id + " embedding dimension " +
                                    std::to_string(c.embedding->size()) + " != " + std::to_string(s->dim_));
        }
        for (double x : *c.embedding) {
            if (!std::isfinite(x)) throw PreconditionError("chunk " + c.chunk_id + " embedding is not finite");
        }
        s->vectors_.insert(s->vectors_.end(), c.embedding->begin(), c.embedding->end());
        c.embedding.reset();
    }
    s->chunks_ = std::move(chunks);

    auto derived = derive_keyword_index(s->chunks_);
    s->postings_ = std::move(derived.postings);
    s->doc_lengths_ = std::move(derived.doc_lengths);
    s->avg_doc_length_ = derived.avg_doc_length;
    s->content_hash_ = compute_content_hash(s->chunks_, s->vectors_, s->dim_);
    return s;
}

std::shared_ptr<const IndexSnapshot> IndexSnapshot::empty(TimePoint created_at) {
    return build({}, created_at);
}

std::span<const double> IndexSnapshot::vector(std::size_t i) const {
    if (i >= chunks_.size()) throw PreconditionError("chunk position out of range");
    return std::span<const double>(vectors_).subspan(i * dim_, dim_);
}

const PostingList* IndexSnapshot::postings(const std::string& term) const {
    const auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

std::vector<std::string> IndexSnapshot::vocabulary() const {
    std::vector<std::string> terms;
    terms.reserve(postings_.size());
    for (const auto& [term, list] : postings_) terms.push_back(term);
    std::sort(terms.begin(), terms.end());
    return terms;
}

std::vector<Chunk> IndexSnapshot::chunks_with_embeddings() const {
    std::vector<Chunk> out = chunks_;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto v = vector(i);
        out[i].embedding = Embedding(v.begin(), v.end());
    }
    return out;
}

void IndexSnapshot::validate() const {
    if (vectors_.size() != chunks_.size() * dim_) throw DataIntegrityError("vector store does not cover the chunk set");
    if (!chunks_.empty() && dim_ == 0) throw DataIntegrityError("zero embedding dimension");
    for (std::size_t i = 1; i < chunks_.size(); ++i) {
        if (!canonical_less(chunks_[i - 1], chunks_[i])) throw DataIntegrityError("chunks out of canonical order");
    }
    for (const auto& c : chunks_) {
        if (c.chunk_id != make_chunk_id(c.source_path, c.unit_number, c.ordinal, c.text)) {
            throw DataIntegrityError("chunk id " + c.chunk_id + " does not match its content");
        }
    }
    for (double x : vectors_) {
        if (!std::isfinite(x)) throw DataIntegrityError("non-finite embedding value");
    }
    const auto derived = derive_keyword_index(chunks_);
    if (derived.doc_lengths != doc_lengths_ || derived.avg_doc_length != avg_doc_length_) {
        throw DataIntegrityError("document lengths disagree with chunk text");
    }
    if (derived.postings.size() != postings_.size()) throw DataIntegrityError("postings vocabulary mismatch");
    for (const auto& [term, list] : derived.postings) {
        const auto* mine = postings(term);
        if (mine == nullptr || mine->chunks != list.chunks || mine->term_freqs != list.term_freqs) {
            throw DataIntegrityError("postings for '" + term + "' disagree with chunk text");
        }
    }
    if (compute_content_hash(chunks_, vectors_, dim_) != content_hash_) {
        throw DataIntegrityError("content hash mismatch");
    }
}

json IndexSnapshot::to_json() const {
    json chunks = json::array();
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        const auto& c = chunks_[i];
        const auto v = vector(i);
        chunks.push_back({{"chunk_id", c.chunk_id},
                          {"source_path", c.source_path},
                          {"unit_number", c.unit_number},
                          {"ordinal", c.ordinal},
                          {"text", c.text},
                          {"embedding", std::vector<double>(v.begin(), v.end())}});
    }
    return {{"format", kFormatName},
            {"version", kFormatVersion},
            {"created_at", format_iso8601(created_at_)},
            {"content_hash", content_hash_},
            {"embedding_dim", dim_},
            {"chunks", std::move(chunks)}};
}

std::shared_ptr<const IndexSnapshot> IndexSnapshot::from_json(const json& j) {
    try {
        if (j.at("format").get<std::string>() != kFormatName) throw ParseError("not an index snapshot");
        const int version = j.at("version").get<int>();
        if (version != kFormatVersion) {
            throw ParseError("unsupported snapshot version " + std::to_string(version));
        }
        const auto dim = j.at("embedding_dim").get<std::size_t>();
        std::vector<Chunk> chunks;
        for (const auto& row : j.at("chunks")) {
            Chunk c;
            c.chunk_id = row.at("chunk_id").get<std::string>();
            c.source_path = row.at("source_path").get<std::string>();
            c.unit_number = row.at("unit_number").get<int>();
            c.ordinal = row.at("ordinal").get<int>();
            c.text = row.at("text").get<std::string>();
            c.embedding = row.at("embedding").get<Embedding>();
            if (c.embedding->size() != dim) throw ParseError("chunk " + c.chunk_id + " has the wrong dimension");
            if (c.chunk_id != make_chunk_id(c.source_path, c.unit_number, c.ordinal, c.text)) {
                throw ParseError("chunk id " + c.chunk_id + " does not match its content");
            }
            chunks.push_back(std::move(c));
        }
        auto snapshot = build(std::move(chunks), parse_iso8601(j.at("created_at").get<std::string>()));
        if (snapshot->content_hash() != j.at("content_hash").get<std::string>()) {
            throw ParseError("snapshot content hash mismatch (file corrupt or edited)");
        }
        return snapshot;
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed snapshot: ") + e.what());
    } catch (const PreconditionError& e) {
        throw ParseError(std::string("invalid snapshot: ") + e.what());
    }
}

void IndexSnapshot::save(const std::filesystem::path& path) const {
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << to_json().dump();
        if (!out) throw Error("failed writing " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::shared_ptr<const IndexSnapshot> IndexSnapshot::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open snapshot " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const json j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) throw ParseError("snapshot " + path.string() + " is not valid JSON");
    return from_json(j);
}

}  // namespace aita
