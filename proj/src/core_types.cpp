#include "searchrag/core_types.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace searchrag {

using nlohmann::json;

std::string to_string(OptionLabel l) { return std::string(1, to_char(l)); }

std::optional<OptionLabel> option_from_char(char c) {
    if (c >= 'A' && c <= 'D') return static_cast<OptionLabel>(c - 'A');
    if (c >= 'a' && c <= 'd') return static_cast<OptionLabel>(c - 'a');
    return std::nullopt;
}

std::optional<OptionLabel> option_from_string(std::string_view s) {
    if (s.size() != 1) return std::nullopt;
    return option_from_char(s[0]);
}

void Question::validate() const {
    if (id.empty()) throw std::invalid_argument("question id empty");
    if (stem.empty()) throw std::invalid_argument("question stem empty");
    if (options.size() < 2 || options.size() > 4) {
        throw std::invalid_argument("question must have 2..4 options, got " +
                                    std::to_string(options.size()));
    }
    for (const auto& opt : options) {
        if (opt.empty()) throw std::invalid_argument("empty option text");
    }
    if (gold && !has_label(*gold)) {
        throw std::invalid_argument("gold label " + to_string(*gold) +
                                    " outside option range");
    }
}

double TokenDistribution::total_mass() const {
    double sum = residual;
    for (const auto& e : entries) sum += e.prob;
    return sum;
}

void TokenDistribution::validate() const {
    std::unordered_set<std::string> seen;
    for (const auto& e : entries) {
        if (!(e.prob >= 0.0 && e.prob <= 1.0)) {
            throw std::invalid_argument("token prob out of [0,1]: " + std::to_string(e.prob));
        }
        if (!seen.insert(e.token).second) {
            throw std::invalid_argument("duplicate token in distribution: " + e.token);
        }
    }
    if (!(residual >= 0.0 && residual <= 1.0)) {
        throw std::invalid_argument("residual out of [0,1]");
    }
    double mass = total_mass();
    if (std::abs(mass - 1.0) > kMassTolerance) {
        throw std::invalid_argument("distribution mass " + std::to_string(mass) +
                                    " not within 1 +/- 1e-6");
    }
}

std::string to_string(Mode m) {
    switch (m) {
        case Mode::Cot: return "cot";
        case Mode::QuestionOnlyRetrieval: return "question_only_retrieval";
        case Mode::SearchRag: return "searchrag";
        case Mode::SearchRagUnfiltered: return "searchrag_unfiltered";
    }
    return "unknown";
}

std::optional<Mode> mode_from_string(std::string_view s) {
    if (s == "cot") return Mode::Cot;
    if (s == "question_only_retrieval" || s == "question-only") return Mode::QuestionOnlyRetrieval;
    if (s == "searchrag") return Mode::SearchRag;
    if (s == "searchrag_unfiltered" || s == "searchrag-unfiltered") return Mode::SearchRagUnfiltered;
    return std::nullopt;
}

std::string to_string(EntropySpace s) {
    return s == EntropySpace::Labels ? "labels" : "raw";
}

std::optional<EntropySpace> entropy_space_from_string(std::string_view s) {
    if (s == "labels") return EntropySpace::Labels;
    if (s == "raw") return EntropySpace::Raw;
    return std::nullopt;
}

void RunConfig::validate() const {
    if (num_queries < 0) throw std::invalid_argument("num_queries must be >= 0");
    if (!(gen_temperature > 0.0)) throw std::invalid_argument("gen_temperature must be > 0");
    if (max_gen_tokens < 1) throw std::invalid_argument("max_gen_tokens must be >= 1");
    if (top_logprobs < 1) throw std::invalid_argument("top_logprobs must be >= 1");
    if (max_snippet_chars < 1) throw std::invalid_argument("max_snippet_chars must be >= 1");
    if (parallelism < 1) throw std::invalid_argument("parallelism must be >= 1");
}

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

void to_json(json& j, const Question& q) {
    json opts = json::object();
    for (size_t i = 0; i < q.options.size(); ++i) {
        opts[to_string(static_cast<OptionLabel>(i))] = q.options[i];
    }
    j = json{{"id", q.id}, {"question", q.stem}, {"options", opts}};
    if (q.gold) j["answer"] = to_string(*q.gold);
}

void from_json(const json& j, Question& q) {
    q = Question{};
    q.id = j.at("id").get<std::string>();
    q.stem = j.at("question").get<std::string>();
    const auto& opts = j.at("options");
    if (!opts.is_object()) throw std::invalid_argument("options must be an object");
    q.options.clear();
    for (int i = 0; i < static_cast<int>(opts.size()); ++i) {
        std::string label = to_string(static_cast<OptionLabel>(i));
        if (!opts.contains(label)) {
            throw std::invalid_argument("option labels must be contiguous from A; missing " + label);
        }
        q.options.push_back(opts.at(label).get<std::string>());
    }
    if (j.contains("answer") && !j.at("answer").is_null()) {
        auto g = option_from_string(j.at("answer").get<std::string>());
        if (!g) throw std::invalid_argument("invalid answer label");
        q.gold = *g;
    }
    q.validate();
}

void to_json(json& j, const TokenDistribution& d) {
    json entries = json::array();
    for (const auto& e : d.entries) entries.push_back(json{{"token", e.token}, {"prob", e.prob}});
    j = json{{"entries", entries}, {"residual", d.residual}};
}

void from_json(const json& j, TokenDistribution& d) {
    d = TokenDistribution{};
    for (const auto& e : j.at("entries")) {
        d.entries.push_back({e.at("token").get<std::string>(), e.at("prob").get<double>()});
    }
    d.residual = j.at("residual").get<double>();
}

void to_json(json& j, const SyntheticQuery& q) {
    j = json{{"sample_index", q.sample_index}, {"text", q.text}, {"raw_generation", q.raw_generation}};
}

void from_json(const json& j, SyntheticQuery& q) {
    q.sample_index = j.at("sample_index").get<int>();
    q.text = j.at("text").get<std::string>();
    q.raw_generation = j.value("raw_generation", std::string{});
}

namespace {

std::string kind_name(SourcePart::Kind k) {
    switch (k) {
        case SourcePart::Kind::KnowledgeGraph: return "knowledge_graph";
        case SourcePart::Kind::AnswerBox: return "answer_box";
        case SourcePart::Kind::Organic: return "organic";
    }
    return "organic";
}

SourcePart::Kind kind_from_name(const std::string& s) {
    if (s == "knowledge_graph") return SourcePart::Kind::KnowledgeGraph;
    if (s == "answer_box") return SourcePart::Kind::AnswerBox;
    if (s == "organic") return SourcePart::Kind::Organic;
    throw std::invalid_argument("unknown source part kind: " + s);
}

}  // namespace

void to_json(json& j, const SourcePart& p) {
    j = json{{"kind", kind_name(p.kind)}};
    if (p.kind == SourcePart::Kind::Organic) j["rank"] = p.rank;
    if (!p.title.empty()) j["title"] = p.title;
    j["text"] = p.text;
    if (!p.attributes.empty()) {
        json attrs = json::array();
        for (const auto& [k, v] : p.attributes) attrs.push_back(json::array({k, v}));
        j["attributes"] = attrs;
    }
}

void from_json(const json& j, SourcePart& p) {
    p = SourcePart{};
    p.kind = kind_from_name(j.at("kind").get<std::string>());
    p.rank = j.value("rank", 0);
    p.title = j.value("title", std::string{});
    p.text = j.value("text", std::string{});
    if (j.contains("attributes")) {
        for (const auto& a : j.at("attributes")) {
            p.attributes.emplace_back(a.at(0).get<std::string>(), a.at(1).get<std::string>());
        }
    }
}

void to_json(json& j, const Snippet& s) {
    j = json{{"query", s.query}, {"body", s.body}, {"source_parts", s.source_parts}};
}

void from_json(const json& j, Snippet& s) {
    s.query = j.at("query").get<SyntheticQuery>();
    s.body = j.at("body").get<std::string>();
    s.source_parts = j.value("source_parts", std::vector<SourcePart>{});
}

void to_json(json& j, const ScoredSnippet& s) {
    j = json{{"snippet", s.snippet},
             {"post_entropy_bits", s.post_entropy_bits},
             {"delta_h_bits", s.delta_h_bits},
             {"probe_failed", s.probe_failed}};
}

void from_json(const json& j, ScoredSnippet& s) {
    s.snippet = j.at("snippet").get<Snippet>();
    s.post_entropy_bits = j.at("post_entropy_bits").get<double>();
    s.delta_h_bits = j.at("delta_h_bits").get<double>();
    s.probe_failed = j.value("probe_failed", false);
}

void to_json(json& j, const SelectedKnowledge& k) {
    j = json{{"kept", k.kept}, {"rendered", k.rendered}};
}

void from_json(const json& j, SelectedKnowledge& k) {
    k.kept = j.at("kept").get<std::vector<ScoredSnippet>>();
    k.rendered = j.at("rendered").get<std::string>();
}

void to_json(json& j, const RunConfig& c) {
    j = json{{"num_queries", c.num_queries},
             {"gen_temperature", c.gen_temperature},
             {"max_gen_tokens", c.max_gen_tokens},
             {"mode", to_string(c.mode)},
             {"top_logprobs", c.top_logprobs},
             {"seed", c.seed},
             {"max_snippet_chars", c.max_snippet_chars},
             {"parallelism", c.parallelism},
             {"max_kept", c.max_kept},
             {"entropy_space", to_string(c.entropy_space)}};
}

void from_json(const json& j, RunConfig& c) {
    c = RunConfig{};
    c.num_queries = j.value("num_queries", c.num_queries);
    c.gen_temperature = j.value("gen_temperature", c.gen_temperature);
    c.max_gen_tokens = j.value("max_gen_tokens", c.max_gen_tokens);
    if (j.contains("mode")) {
        auto m = mode_from_string(j.at("mode").get<std::string>());
        if (!m) throw std::invalid_argument("unknown mode");
        c.mode = *m;
    }
    c.top_logprobs = j.value("top_logprobs", c.top_logprobs);
    c.seed = j.value("seed", c.seed);
    c.max_snippet_chars = j.value("max_snippet_chars", c.max_snippet_chars);
    c.parallelism = j.value("parallelism", c.parallelism);
    c.max_kept = j.value("max_kept", c.max_kept);
    if (j.contains("entropy_space")) {
        auto s = entropy_space_from_string(j.at("entropy_space").get<std::string>());
        if (!s) throw std::invalid_argument("unknown entropy_space");
        c.entropy_space = *s;
    }
}

}  // namespace searchrag
