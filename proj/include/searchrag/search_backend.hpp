#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "searchrag/core_types.hpp"

namespace searchrag {

// ---------------------------------------------------------------------------
// Search response model (knowledge graph / answer box / top-3 organic)
// ---------------------------------------------------------------------------

struct KnowledgeGraphResult {
    std::string title;
    std::string description;
    std::vector<std::pair<std::string, std::string>> attributes;  // key-sorted

    bool operator==(const KnowledgeGraphResult&) const = default;
};

struct AnswerBoxResult {
    std::string text;

    bool operator==(const AnswerBoxResult&) const = default;
};

struct OrganicResult {
    int rank = 0;  // 1-based, strictly increasing
    std::string title;
    std::string snippet;

    bool operator==(const OrganicResult&) const = default;
};

struct SearchResponse {
    std::optional<KnowledgeGraphResult> knowledge_graph;
    std::optional<AnswerBoxResult> answer_box;
    std::vector<OrganicResult> organic;

    bool empty() const { return !knowledge_graph && !answer_box && organic.empty(); }

    bool operator==(const SearchResponse&) const = default;
};

void to_json(nlohmann::json& j, const SearchResponse& r);
void from_json(const nlohmann::json& j, SearchResponse& r);

/// Parses a Serper-style payload: knowledgeGraph{title,description,attributes},
/// answerBox{answer|snippet}, organic[{title,snippet}]. Organic entries beyond
/// rank 3 and entries without textual content are dropped here. Throws
/// ProtocolError on a malformed payload.
SearchResponse parse_serper_json(const nlohmann::json& payload);

/// Deterministic snippet body: knowledge graph ("title — description" plus
/// "attr: value" lines), answer box text, then organic "title — snippet"
/// lines. Truncated at max_chars on a whitespace boundary; never splits a
/// multi-byte character.
std::string assemble_snippet(const SearchResponse& resp, int max_chars);

// ---------------------------------------------------------------------------
// Offline corpus
// ---------------------------------------------------------------------------

struct CorpusDoc {
    std::string id;
    std::string title;
    std::string text;
};

class Corpus {
public:
    /// JSONL, one {id, title, text} per line. Throws CorpusLoadError.
    static Corpus load(const std::filesystem::path& path);
    static Corpus from_docs(std::vector<CorpusDoc> docs);

    const std::vector<CorpusDoc>& docs() const { return docs_; }

private:
    std::vector<CorpusDoc> docs_;
};

/// Ranks documents by case-folded unique-token overlap with the query
/// (ties by ascending id), returning the top_n as organic results whose
/// snippets are the document text truncated to 200 words. Zero-overlap
/// documents never match.
SearchResponse corpus_search(const std::string& query, const Corpus& corpus, int top_n);

// ---------------------------------------------------------------------------
// Disk cache
// ---------------------------------------------------------------------------

/// One JSON file per entry under dir/<sha256(normalized query)>.json.
/// Writes go through a temp file + rename, so concurrent writers of the same
/// key are safe (last write wins with identical content in replay use).
class CacheStore {
public:
    explicit CacheStore(std::filesystem::path dir);

    std::optional<SearchResponse> get(const std::string& query) const;
    void put(const std::string& query, const SearchResponse& response) const;
    std::filesystem::path entry_path(const std::string& query) const;

private:
    std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

class SearchBackend {
public:
    virtual ~SearchBackend() = default;
    virtual Snippet search(const SyntheticQuery& query) = 0;
};

struct SerperConfig {
    std::string endpoint = "https://google.serper.dev/search";
    std::string api_key;  // env SEARCHRAG_SERPER_KEY
    std::chrono::milliseconds timeout{30'000};
    int max_attempts = 3;
    std::chrono::milliseconds backoff_base{500};

    static SerperConfig from_env();
};

/// Live Serper-style HTTP backend. When a cache store is attached it is
/// consulted first and populated after every live fetch.
class SerperBackend : public SearchBackend {
public:
    SerperBackend(SerperConfig config, int max_snippet_chars,
                  std::optional<CacheStore> cache = std::nullopt);
    Snippet search(const SyntheticQuery& query) override;

private:
    SearchResponse fetch(const std::string& query_text);

    SerperConfig config_;
    int max_snippet_chars_;
    std::optional<CacheStore> cache_;
};

/// Replay-only backend: a cache miss yields an empty snippet.
class CacheBackend : public SearchBackend {
public:
    CacheBackend(CacheStore store, int max_snippet_chars);
    Snippet search(const SyntheticQuery& query) override;

private:
    CacheStore store_;
    int max_snippet_chars_;
};

class CorpusBackend : public SearchBackend {
public:
    CorpusBackend(Corpus corpus, int max_snippet_chars, int top_n = 3);
    Snippet search(const SyntheticQuery& query) override;

private:
    Corpus corpus_;
    int max_snippet_chars_;
    int top_n_;
};

/// Builds the Snippet for a query from an already-fetched response.
Snippet make_snippet(const SyntheticQuery& query, const SearchResponse& resp, int max_chars);

}  // namespace searchrag
