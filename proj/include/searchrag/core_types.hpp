#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace searchrag {

// ---------------------------------------------------------------------------
// Answer labels
// ---------------------------------------------------------------------------

/// Multiple-choice answer label. Ordered A < B < C < D.
enum class OptionLabel : int { A = 0, B = 1, C = 2, D = 3 };

constexpr char to_char(OptionLabel l) { return static_cast<char>('A' + static_cast<int>(l)); }
std::string to_string(OptionLabel l);
std::optional<OptionLabel> option_from_char(char c);
std::optional<OptionLabel> option_from_string(std::string_view s);

// ---------------------------------------------------------------------------
// Question
// ---------------------------------------------------------------------------

/// One multiple-choice QA item. Options are stored positionally: index 0 is
/// label A, index 1 is B, and so on (labels are contiguous from A).
struct Question {
    std::string id;
    std::string stem;
    std::vector<std::string> options;  // 2..4 entries, index = label
    std::optional<OptionLabel> gold;   // absent for inference-only use

    /// Throws std::invalid_argument when an invariant is broken.
    void validate() const;

    bool has_label(OptionLabel l) const {
        return static_cast<size_t>(l) < options.size();
    }
    OptionLabel last_label() const {
        return static_cast<OptionLabel>(static_cast<int>(options.size()) - 1);
    }

    bool operator==(const Question&) const = default;
};

// ---------------------------------------------------------------------------
// First-token probability mass
// ---------------------------------------------------------------------------

struct TokenProb {
    std::string token;
    double prob = 0.0;

    bool operator==(const TokenProb&) const = default;
};

/// Probability mass over observed first tokens plus a residual bucket for
/// the mass the endpoint's top-k did not return.
struct TokenDistribution {
    static constexpr double kMassTolerance = 1e-6;

    std::vector<TokenProb> entries;
    double residual = 0.0;

    double total_mass() const;

    /// Throws std::invalid_argument when the mass invariant or token
    /// uniqueness is violated.
    void validate() const;

    bool operator==(const TokenDistribution&) const = default;
};

// ---------------------------------------------------------------------------
// Queries and snippets
// ---------------------------------------------------------------------------

/// One successfully parsed search query sampled from the model.
struct SyntheticQuery {
    int sample_index = 0;        // i within the m sampling attempts
    std::string text;            // normalized query; never empty, no newlines
    std::string raw_generation;  // full model output the query came from

    bool operator==(const SyntheticQuery&) const = default;
};

/// One tagged fragment of a search response used to build a snippet body.
struct SourcePart {
    enum class Kind { KnowledgeGraph, AnswerBox, Organic };

    Kind kind = Kind::Organic;
    int rank = 0;       // organic only, 1-based
    std::string title;  // knowledge graph / organic
    std::string text;   // description / answer text / organic snippet
    std::vector<std::pair<std::string, std::string>> attributes;  // knowledge graph only

    bool operator==(const SourcePart&) const = default;
};

/// Assembled search evidence for one query. `body` is the deterministic
/// rendering of `source_parts`, truncated to the configured budget.
struct Snippet {
    SyntheticQuery query;
    std::string body;
    std::vector<SourcePart> source_parts;

    bool operator==(const Snippet&) const = default;
};

/// A snippet together with the entropy measured after injecting it.
struct ScoredSnippet {
    Snippet snippet;
    double post_entropy_bits = 0.0;
    double delta_h_bits = 0.0;  // base - post
    bool probe_failed = false;  // probe errored; acts as delta = -inf

    bool operator==(const ScoredSnippet&) const = default;
};

/// The filtered knowledge set fed to final generation. Ordered by
/// descending delta, ties broken by ascending sample index.
struct SelectedKnowledge {
    std::vector<ScoredSnippet> kept;
    std::string rendered;  // bodies joined by blank lines

    bool empty() const { return kept.empty(); }

    bool operator==(const SelectedKnowledge&) const = default;
};

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

enum class Mode { Cot, QuestionOnlyRetrieval, SearchRag, SearchRagUnfiltered };

std::string to_string(Mode m);
std::optional<Mode> mode_from_string(std::string_view s);

/// Which distribution entropy is computed over: canonical option-label
/// buckets plus OTHER (default), or the raw top-k tokens.
enum class EntropySpace { Labels, Raw };

std::string to_string(EntropySpace s);
std::optional<EntropySpace> entropy_space_from_string(std::string_view s);

struct RunConfig {
    int num_queries = 32;          // m; ignored by cot / question-only modes
    double gen_temperature = 2.0;  // query sampling only
    int max_gen_tokens = 512;
    Mode mode = Mode::SearchRag;
    int top_logprobs = 20;  // k
    std::uint64_t seed = 0;
    int max_snippet_chars = 1500;
    int parallelism = 1;
    int max_kept = -1;  // <0 means unlimited
    EntropySpace entropy_space = EntropySpace::Labels;

    void validate() const;

    bool operator==(const RunConfig&) const = default;
};

// ---------------------------------------------------------------------------
// JSON forms (canonical; round-trip stable)
// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const Question& q);
void from_json(const nlohmann::json& j, Question& q);
void to_json(nlohmann::json& j, const TokenDistribution& d);
void from_json(const nlohmann::json& j, TokenDistribution& d);
void to_json(nlohmann::json& j, const SyntheticQuery& q);
void from_json(const nlohmann::json& j, SyntheticQuery& q);
void to_json(nlohmann::json& j, const SourcePart& p);
void from_json(const nlohmann::json& j, SourcePart& p);
void to_json(nlohmann::json& j, const Snippet& s);
void from_json(const nlohmann::json& j, Snippet& s);
void to_json(nlohmann::json& j, const ScoredSnippet& s);
void from_json(const nlohmann::json& j, ScoredSnippet& s);
void to_json(nlohmann::json& j, const SelectedKnowledge& k);
void from_json(const nlohmann::json& j, SelectedKnowledge& k);
void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

}  // namespace searchrag
