#include "searchrag/search_backend.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "searchrag/errors.hpp"
#include "searchrag/util.hpp"

namespace searchrag {

using nlohmann::json;

namespace {

constexpr const char* kDash = " — ";  // em dash separator in rendered lines
constexpr int kOrganicKeep = 3;
constexpr size_t kCorpusSnippetWords = 200;

std::string truncate_on_whitespace(const std::string& s, size_t max_chars) {
    if (s.size() <= max_chars) return s;
    size_t cut = max_chars;
    while (cut > 0 && is_utf8_continuation(static_cast<unsigned char>(s[cut]))) --cut;
    size_t ws = std::string::npos;
    for (size_t i = 0; i < cut; ++i) {
        if (std::isspace(static_cast<unsigned char>(s[i]))) ws = i;
    }
    if (ws != std::string::npos) cut = ws;
    std::string out = s.substr(0, cut);
    while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.pop_back();
    return out;
}

std::string get_string(const json& j, const char* key) {
    if (!j.contains(key)) return {};
    const auto& v = j.at(key);
    return v.is_string() ? v.get<std::string>() : std::string{};
}

}  // namespace

void to_json(json& j, const SearchResponse& r) {
    j = json::object();
    if (r.knowledge_graph) {
        json attrs = json::array();
        for (const auto& [k, v] : r.knowledge_graph->attributes) {
            attrs.push_back(json::array({k, v}));
        }
        j["knowledge_graph"] = json{{"title", r.knowledge_graph->title},
                                    {"description", r.knowledge_graph->description},
                                    {"attributes", attrs}};
    } else {
        j["knowledge_graph"] = nullptr;
    }
    j["answer_box"] = r.answer_box ? json{{"text", r.answer_box->text}} : json(nullptr);
    json organic = json::array();
    for (const auto& o : r.organic) {
        organic.push_back(json{{"rank", o.rank}, {"title", o.title}, {"snippet", o.snippet}});
    }
    j["organic"] = organic;
}

void from_json(const json& j, SearchResponse& r) {
    r = SearchResponse{};
    if (j.contains("knowledge_graph") && !j.at("knowledge_graph").is_null()) {
        const auto& kg = j.at("knowledge_graph");
        KnowledgeGraphResult out;
        out.title = kg.value("title", std::string{});
        out.description = kg.value("description", std::string{});
        if (kg.contains("attributes")) {
            for (const auto& a : kg.at("attributes")) {
                out.attributes.emplace_back(a.at(0).get<std::string>(), a.at(1).get<std::string>());
            }
        }
        r.knowledge_graph = std::move(out);
    }
    if (j.contains("answer_box") && !j.at("answer_box").is_null()) {
        r.answer_box = AnswerBoxResult{j.at("answer_box").at("text").get<std::string>()};
    }
    if (j.contains("organic")) {
        for (const auto& o : j.at("organic")) {
            r.organic.push_back({o.at("rank").get<int>(), o.at("title").get<std::string>(),
                                 o.at("snippet").get<std::string>()});
        }
    }
}

SearchResponse parse_serper_json(const json& payload) {
    if (!payload.is_object()) throw ProtocolError("search payload is not a JSON object");
    SearchResponse resp;
    try {
        if (payload.contains("knowledgeGraph") && payload.at("knowledgeGraph").is_object()) {
            const auto& kg = payload.at("knowledgeGraph");
            KnowledgeGraphResult out;
            out.title = get_string(kg, "title");
            out.description = get_string(kg, "description");
            if (kg.contains("attributes") && kg.at("attributes").is_object()) {
                for (const auto& [k, v] : kg.at("attributes").items()) {
                    if (v.is_string() && !v.get<std::string>().empty()) {
                        out.attributes.emplace_back(k, v.get<std::string>());
                    }
                }
                std::sort(out.attributes.begin(), out.attributes.end());
            }
            if (!out.title.empty() || !out.description.empty()) {
                resp.knowledge_graph = std::move(out);
            }
        }
        if (payload.contains("answerBox") && payload.at("answerBox").is_object()) {
            const auto& ab = payload.at("answerBox");
            std::string text = get_string(ab, "answer");
            if (text.empty()) text = get_string(ab, "snippet");
            if (!text.empty()) resp.answer_box = AnswerBoxResult{std::move(text)};
        }
        if (payload.contains("organic")) {
            if (!payload.at("organic").is_array()) {
                throw ProtocolError("organic results must be an array");
            }
            for (const auto& o : payload.at("organic")) {
                if (!o.is_object()) continue;
                std::string title = get_string(o, "title");
                std::string snippet = get_string(o, "snippet");
                // Entries without textual content (images, ads) are omitted.
                if (title.empty() || snippet.empty()) continue;
                resp.organic.push_back(
                    {static_cast<int>(resp.organic.size()) + 1, std::move(title), std::move(snippet)});
                if (resp.organic.size() == kOrganicKeep) break;
            }
        }
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed search payload: ") + e.what());
    }
    return resp;
}

std::string assemble_snippet(const SearchResponse& resp, int max_chars) {
    if (max_chars < 1) throw std::invalid_argument("max_chars must be >= 1");
    std::vector<std::string> lines;
    if (resp.knowledge_graph) {
        const auto& kg = *resp.knowledge_graph;
        if (!kg.title.empty() && !kg.description.empty()) {
            lines.push_back(kg.title + kDash + kg.description);
        } else if (!kg.title.empty()) {
            lines.push_back(kg.title);
        } else if (!kg.description.empty()) {
            lines.push_back(kg.description);
        }
        for (const auto& [k, v] : kg.attributes) lines.push_back(k + ": " + v);
    }
    if (resp.answer_box) lines.push_back(resp.answer_box->text);
    for (const auto& o : resp.organic) {
        if (o.rank > kOrganicKeep) continue;
        lines.push_back(o.title + kDash + o.snippet);
    }
    std::string body;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (i > 0) body.push_back('\n');
        body += lines[i];
    }
    return truncate_on_whitespace(body, static_cast<size_t>(max_chars));
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

Corpus Corpus::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CorpusLoadError("cannot open corpus: " + path.string());
    Corpus corpus;
    std::string line;
    int line_no = 0;
    std::unordered_set<std::string> ids;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw CorpusLoadError("corpus line " + std::to_string(line_no) + ": " + e.what());
        }
        CorpusDoc doc;
        doc.id = j.value("id", std::string{});
        doc.title = j.value("title", std::string{});
        doc.text = j.value("text", std::string{});
        if (doc.id.empty()) {
            throw CorpusLoadError("corpus line " + std::to_string(line_no) + ": missing id");
        }
        if (!ids.insert(doc.id).second) {
            throw CorpusLoadError("corpus line " + std::to_string(line_no) + ": duplicate id " +
                                  doc.id);
        }
        corpus.docs_.push_back(std::move(doc));
    }
    return corpus;
}

Corpus Corpus::from_docs(std::vector<CorpusDoc> docs) {
    Corpus corpus;
    corpus.docs_ = std::move(docs);
    return corpus;
}

namespace {

std::set<std::string> tokenize(const std::string& text) {
    std::set<std::string> tokens;
    std::string cur;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            tokens.insert(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.insert(cur);
    return tokens;
}

std::string first_words(const std::string& text, size_t max_words) {
    size_t words = 0;
    size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i >= text.size()) break;
        if (++words > max_words) {
            std::string out = text.substr(0, i);
            while (!out.empty() && std::isspace(static_cast<unsigned char>(out.back()))) out.pop_back();
            return out;
        }
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    }
    return text;
}

}  // namespace

SearchResponse corpus_search(const std::string& query, const Corpus& corpus, int top_n) {
    auto query_tokens = tokenize(query);
    struct Hit {
        size_t overlap;
        const CorpusDoc* doc;
    };
    std::vector<Hit> hits;
    for (const auto& doc : corpus.docs()) {
        auto doc_tokens = tokenize(doc.title + " " + doc.text);
        size_t overlap = 0;
        for (const auto& t : query_tokens) overlap += doc_tokens.count(t);
        if (overlap > 0) hits.push_back({overlap, &doc});
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
        if (a.overlap != b.overlap) return a.overlap > b.overlap;
        return a.doc->id < b.doc->id;
    });
    SearchResponse resp;
    for (const auto& hit : hits) {
        if (static_cast<int>(resp.organic.size()) >= top_n) break;
        resp.organic.push_back({static_cast<int>(resp.organic.size()) + 1, hit.doc->title,
                                first_words(hit.doc->text, kCorpusSnippetWords)});
    }
    return resp;
}

// ---------------------------------------------------------------------------
// Cache
// ---------------------------------------------------------------------------

CacheStore::CacheStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::filesystem::path CacheStore::entry_path(const std::string& query) const {
    return dir_ / (sha256_hex(normalize_query(query)) + ".json");
}

std::optional<SearchResponse> CacheStore::get(const std::string& query) const {
    std::ifstream in(entry_path(query));
    if (!in) return std::nullopt;
    try {
        json j = json::parse(in);
        return j.at("response").get<SearchResponse>();
    } catch (const json::exception& e) {
        throw ProtocolError("corrupt cache entry for '" + query + "': " + e.what());
    }
}

void CacheStore::put(const std::string& query, const SearchResponse& response) const {
    static std::atomic<std::uint64_t> write_counter{0};
    json entry = {{"key", normalize_query(query)},
                  {"stored_at", static_cast<std::int64_t>(std::time(nullptr))},
                  {"response", response}};
    auto path = entry_path(query);
    auto tmp = path;
    tmp += ".tmp" + std::to_string(write_counter.fetch_add(1));
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write cache entry: " + tmp.string());
        out << entry.dump(2) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

Snippet make_snippet(const SyntheticQuery& query, const SearchResponse& resp, int max_chars) {
    Snippet snippet;
    snippet.query = query;
    if (resp.knowledge_graph) {
        SourcePart part;
        part.kind = SourcePart::Kind::KnowledgeGraph;
        part.title = resp.knowledge_graph->title;
        part.text = resp.knowledge_graph->description;
        part.attributes = resp.knowledge_graph->attributes;
        snippet.source_parts.push_back(std::move(part));
    }
    if (resp.answer_box) {
        SourcePart part;
        part.kind = SourcePart::Kind::AnswerBox;
        part.text = resp.answer_box->text;
        snippet.source_parts.push_back(std::move(part));
    }
    for (const auto& o : resp.organic) {
        SourcePart part;
        part.kind = SourcePart::Kind::Organic;
        part.rank = o.rank;
        part.title = o.title;
        part.text = o.snippet;
        snippet.source_parts.push_back(std::move(part));
    }
    snippet.body = assemble_snippet(resp, max_chars);
    return snippet;
}

SerperConfig SerperConfig::from_env() {
    SerperConfig cfg;
    if (const char* key = std::getenv("SEARCHRAG_SERPER_KEY")) cfg.api_key = key;
    if (const char* url = std::getenv("SEARCHRAG_SERPER_URL")) cfg.endpoint = url;
    return cfg;
}

SerperBackend::SerperBackend(SerperConfig config, int max_snippet_chars,
                             std::optional<CacheStore> cache)
    : config_(std::move(config)), max_snippet_chars_(max_snippet_chars), cache_(std::move(cache)) {}

SearchResponse SerperBackend::fetch(const std::string& query_text) {
    size_t scheme = config_.endpoint.find("://");
    size_t path_start = config_.endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    std::string host = path_start == std::string::npos ? config_.endpoint
                                                       : config_.endpoint.substr(0, path_start);
    std::string path = path_start == std::string::npos ? "/search"
                                                       : config_.endpoint.substr(path_start);

    json body = {{"q", query_text}};
    std::string payload = body.dump();
    std::string last_error;
    for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
        if (attempt > 1) {
            std::this_thread::sleep_for(config_.backoff_base * (1 << (attempt - 2)));
        }
        httplib::Client client(host);
        client.set_connection_timeout(config_.timeout);
        client.set_read_timeout(config_.timeout);
        client.set_write_timeout(config_.timeout);
        httplib::Headers headers{{"X-API-KEY", config_.api_key}};
        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            last_error = "transport failure: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status == 402) {
            throw QuotaError("search quota exhausted (status " + std::to_string(res->status) +
                             "): " + res->body.substr(0, 200));
        }
        if (res->status >= 500) {
            last_error = "endpoint status " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw ProtocolError("search endpoint status " + std::to_string(res->status) + ": " +
                                res->body.substr(0, 200));
        }
        json parsed;
        try {
            parsed = json::parse(res->body);
        } catch (const json::exception& e) {
            throw ProtocolError(std::string("search endpoint returned non-JSON body: ") + e.what());
        }
        return parse_serper_json(parsed);
    }
    throw TransportError("search request failed after " + std::to_string(config_.max_attempts) +
                         " attempts: " + last_error);
}

Snippet SerperBackend::search(const SyntheticQuery& query) {
    if (cache_) {
        if (auto cached = cache_->get(query.text)) {
            return make_snippet(query, *cached, max_snippet_chars_);
        }
    }
    SearchResponse resp = fetch(query.text);
    if (cache_) cache_->put(query.text, resp);
    return make_snippet(query, resp, max_snippet_chars_);
}

CacheBackend::CacheBackend(CacheStore store, int max_snippet_chars)
    : store_(std::move(store)), max_snippet_chars_(max_snippet_chars) {}

Snippet CacheBackend::search(const SyntheticQuery& query) {
    auto cached = store_.get(query.text);
    // A cold key in replay mode degrades to an empty snippet; the pipeline
    // scores it and the strict gate drops it.
    SearchResponse resp = cached ? *cached : SearchResponse{};
    return make_snippet(query, resp, max_snippet_chars_);
}

CorpusBackend::CorpusBackend(Corpus corpus, int max_snippet_chars, int top_n)
    : corpus_(std::move(corpus)), max_snippet_chars_(max_snippet_chars), top_n_(top_n) {}

Snippet CorpusBackend::search(const SyntheticQuery& query) {
    return make_snippet(query, corpus_search(query.text, corpus_, top_n_), max_snippet_chars_);
}

}  // namespace searchrag
