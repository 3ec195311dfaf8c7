#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "hopqa/retrieval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "hopqa/text.hpp"

namespace hopqa {

void RetrieverConfig::validate() const {
    if (top_k < 1) throw ConfigError("retrieval top_k must be >= 1");
    if (kind == RetrieverKind::remote && remote_endpoint.empty())
        throw ConfigError("remote retriever requires remote_endpoint");
    if (kind == RetrieverKind::local_lexical && !remote_endpoint.empty())
        throw ConfigError("local retriever takes no remote_endpoint");
    if (passage_char_budget < 0) throw ConfigError("passage_char_budget must be >= 0");
}

void LexicalIndex::add(CorpusChunk chunk) {
    if (text::trim(chunk.text).empty())
        throw InvariantViolation("chunk text is empty for doc_id \"" + chunk.doc_id + "\"");
    if (!by_doc_id_.emplace(chunk.doc_id, chunks_.size()).second)
        throw DuplicateDocId(chunk.doc_id);
    chunks_.push_back(std::move(chunk));
    index_chunk(chunks_.size() - 1);
}

void LexicalIndex::index_chunk(size_t pos) {
    auto tokens = text::normalize_tokens(chunks_[pos].title + " " + chunks_[pos].text);
    doc_len_.push_back(static_cast<int>(tokens.size()));
    total_len_ += static_cast<int64_t>(tokens.size());
    std::map<std::string, uint32_t> tf;
    for (auto& t : tokens) ++tf[t];
    for (auto& [term, freq] : tf)
        postings_[term].emplace_back(static_cast<uint32_t>(pos), freq);
}

size_t LexicalIndex::ingest_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open corpus file " + path);
    *this = LexicalIndex{};

    std::string line;
    size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw MalformedLine(lineno, std::string("invalid JSON: ") + e.what());
        }
        for (const char* field : {"doc_id", "title", "text"})
            if (!obj.contains(field) || !obj.at(field).is_string())
                throw MalformedLine(lineno, std::string("missing string field \"") + field + "\"");
        CorpusChunk chunk{obj.at("doc_id").get<std::string>(),
                          obj.at("title").get<std::string>(),
                          obj.at("text").get<std::string>()};
        if (text::trim(chunk.text).empty()) throw MalformedLine(lineno, "empty text");
        add(std::move(chunk));
    }
    return chunks_.size();
}

void LexicalIndex::save(const std::string& path) const {
    nlohmann::json doc;
    doc["format"] = "hopqa.index.v1";
    auto& arr = doc["chunks"] = nlohmann::json::array();
    for (const auto& c : chunks_)
        arr.push_back({{"doc_id", c.doc_id}, {"title", c.title}, {"text", c.text}});
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write index file " + path);
    out << doc.dump() << "\n";
}

LexicalIndex LexicalIndex::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open index file " + path);
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("index file " + path + " is corrupt: " + e.what());
    }
    if (doc.value("format", "") != "hopqa.index.v1")
        throw DataError("index file " + path + " has an unknown format");
    LexicalIndex index;
    for (const auto& c : doc.at("chunks"))
        index.add({c.at("doc_id").get<std::string>(), c.at("title").get<std::string>(),
                   c.at("text").get<std::string>()});
    return index;
}

std::vector<Passage> LexicalIndex::retrieve(const std::string& query, int k) const {
    if (chunks_.empty()) throw EmptyIndex();
    if (k < 1) throw PreconditionError("retrieve: k must be >= 1");

    const double n_docs = static_cast<double>(chunks_.size());
    const double avgdl = static_cast<double>(total_len_) / n_docs;

    // one weight per distinct query term occurrence (repeated terms count again)
    std::unordered_map<size_t, double> scores;
    for (const auto& term : text::normalize_tokens(query)) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const double df = static_cast<double>(it->second.size());
        const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        for (const auto& [pos, tf] : it->second) {
            const double dl = doc_len_[pos];
            const double denom = tf + kK1 * (1.0 - kB + kB * dl / avgdl);
            scores[pos] += idf * (tf * (kK1 + 1.0)) / denom;
        }
    }

    std::vector<std::pair<size_t, double>> ranked(scores.begin(), scores.end());
    std::sort(ranked.begin(), ranked.end(), [&](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return chunks_[a.first].doc_id < chunks_[b.first].doc_id;
    });
    if (ranked.size() > static_cast<size_t>(k)) ranked.resize(k);

    std::vector<Passage> out;
    out.reserve(ranked.size());
    for (size_t i = 0; i < ranked.size(); ++i) {
        const auto& chunk = chunks_[ranked[i].first];
        out.push_back({static_cast<int>(i) + 1, chunk.doc_id, chunk.title, chunk.text,
                       ranked[i].second});
    }
    return out;
}

std::vector<Passage> RemoteRetriever::retrieve(const std::string& query, int k) const {
    auto scheme_end = endpoint_.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("remote_endpoint must be a full URL: " + endpoint_);
    auto path_start = endpoint_.find('/', scheme_end + 3);
    std::string base = path_start == std::string::npos ? endpoint_ : endpoint_.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/" : endpoint_.substr(path_start);

    httplib::Client client(base);
    const auto secs = static_cast<time_t>(timeout_);
    client.set_connection_timeout(secs, 0);
    client.set_read_timeout(secs, 0);

    nlohmann::json body{{"query", query}, {"k", k}};
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) throw RemoteRetrieverError(0, httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300) throw RemoteRetrieverError(res->status);

    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw RemoteRetrieverError(res->status, std::string("bad response body: ") + e.what());
    }
    std::vector<Passage> out;
    int next_id = 1;
    for (const auto& p : doc.at("passages")) {
        Passage passage;
        passage.local_id = next_id++;
        passage.doc_id = p.at("doc_id").get<std::string>();
        passage.title = p.value("title", "");
        passage.text = p.at("text").get<std::string>();
        passage.score = p.value("score", 0.0);
        out.push_back(std::move(passage));
        if (next_id > k) break;
    }
    return out;
}

size_t ingest(const std::string& corpus_path, const std::string& index_path) {
    LexicalIndex index;
    size_t count = index.ingest_file(corpus_path);
    index.save(index_path);
    return count;
}

std::unique_ptr<Retriever> make_retriever(const RetrieverConfig& cfg) {
    cfg.validate();
    if (cfg.kind == RetrieverKind::remote)
        return std::make_unique<RemoteRetriever>(cfg.remote_endpoint, cfg.timeout);
    if (cfg.index_path.empty())
        throw ConfigError("local retriever requires retrieval.index_path");
    return std::make_unique<LexicalIndex>(LexicalIndex::load(cfg.index_path));
}

std::vector<Passage> truncate_to_budget(std::vector<Passage> passages, int budget) {
    if (budget <= 0) return passages;
    size_t total = 0;
    for (const auto& p : passages) total += p.text.size();
    if (total <= static_cast<size_t>(budget)) return passages;

    // find the per-passage cap that brings the total under budget
    size_t lo = 0, hi = 0;
    for (const auto& p : passages) hi = std::max(hi, p.text.size());
    while (lo < hi) {
        size_t cap = (lo + hi) / 2;
        size_t sum = 0;
        for (const auto& p : passages) sum += std::min(p.text.size(), cap);
        if (sum <= static_cast<size_t>(budget))
            lo = cap + 1;
        else
            hi = cap;
    }
    const size_t cap = lo == 0 ? 0 : lo - 1;
    for (auto& p : passages) {
        if (p.text.size() <= cap) continue;
        p.text.resize(cap);  // longest trimmed first
        // never leave a dangling partial UTF-8 sequence behind
        while (!p.text.empty() && (static_cast<unsigned char>(p.text.back()) & 0xC0) == 0x80)
            p.text.pop_back();
        if (!p.text.empty() && static_cast<unsigned char>(p.text.back()) >= 0xC0)
            p.text.pop_back();
    }
    return passages;
}

}  // namespace hopqa
