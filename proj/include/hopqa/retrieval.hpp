#pragma once
// Corpus ingestion and retrieval: a local lexical (BM25) index plus a
// client for remote retrieval services. The Retriever interface is the
// seam where a dense or remote retriever plugs in.

#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "hopqa/core.hpp"

namespace hopqa {

struct CorpusChunk {
    std::string doc_id;
    std::string title;
    std::string text;
};

enum class RetrieverKind { local_lexical, remote };

struct RetrieverConfig {
    RetrieverKind kind = RetrieverKind::local_lexical;
    int top_k = 10;  // matches the rerank prompt's top-10
    std::string remote_endpoint;
    std::string index_path;
    int passage_char_budget = 0;  // 0 = unlimited
    double timeout = 30.0;

    void validate() const;
};

class Retriever {
public:
    virtual ~Retriever() = default;
    virtual std::vector<Passage> retrieve(const std::string& query, int k) const = 0;
};

// Inverted index with document-frequency statistics, scored with BM25
// (k1 = 1.2, b = 0.75). Read-only after build; concurrent retrieves are safe.
class LexicalIndex : public Retriever {
public:
    static constexpr double kK1 = 1.2;
    static constexpr double kB = 0.75;

    void add(CorpusChunk chunk);  // throws DuplicateDocId
    // One JSON object per line with doc_id/title/text. Replaces current content.
    size_t ingest_file(const std::string& path);

    void save(const std::string& path) const;
    static LexicalIndex load(const std::string& path);

    size_t size() const { return chunks_.size(); }

    // Top-k chunks by BM25 score, ties broken by doc_id lexicographic order;
    // local_ids assigned 1..n in rank order. Zero-score chunks are omitted.
    std::vector<Passage> retrieve(const std::string& query, int k) const override;

private:
    void index_chunk(size_t pos);

    std::vector<CorpusChunk> chunks_;
    std::vector<int> doc_len_;
    std::unordered_map<std::string, size_t> by_doc_id_;
    std::unordered_map<std::string, std::vector<std::pair<uint32_t, uint32_t>>>
        postings_;  // term -> (chunk position, term frequency)
    int64_t total_len_ = 0;
};

// Minimal JSON POST client: {query, k} -> {passages:[{doc_id,title,text,score}]}.
class RemoteRetriever : public Retriever {
public:
    RemoteRetriever(std::string endpoint, double timeout = 30.0)
        : endpoint_(std::move(endpoint)), timeout_(timeout) {}

    std::vector<Passage> retrieve(const std::string& query, int k) const override;

private:
    std::string endpoint_;
    double timeout_;
};

// Ingests a corpus file and persists the index at index_path.
// Returns the chunk count. Re-ingest replaces the persisted index.
size_t ingest(const std::string& corpus_path, const std::string& index_path);

// Builds the retriever a config describes (loading the persisted index for
// the local kind).
std::unique_ptr<Retriever> make_retriever(const RetrieverConfig& cfg);

// Caps total passage text at `budget` characters by trimming the longest
// passages first; 0 leaves the batch untouched.
std::vector<Passage> truncate_to_budget(std::vector<Passage> passages, int budget);

}  // namespace hopqa
