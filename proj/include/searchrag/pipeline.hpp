#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "searchrag/core_types.hpp"
#include "searchrag/llm_backend.hpp"
#include "searchrag/prompts.hpp"
#include "searchrag/search_backend.hpp"
#include "searchrag/uncertainty.hpp"

namespace searchrag {

/// One of the m sampling attempts. Failed parses stay in the trace (they
/// count toward m) but never reach retrieval.
struct QueryAttempt {
    int sample_index = 0;
    bool ok = false;
    std::string text;  // empty when !ok
    std::string raw_generation;

    bool operator==(const QueryAttempt&) const = default;
};

struct CallCounts {
    int query_gen = 0;
    int base_probe = 0;
    int snippet_probe = 0;
    int final_completion = 0;
    int search = 0;

    int llm_total() const { return query_gen + base_probe + snippet_probe + final_completion; }

    bool operator==(const CallCounts&) const = default;
};

struct QuestionTrace {
    std::string question_id;
    Mode mode = Mode::SearchRag;
    int num_queries = 0;  // attempts issued (m in searchrag modes)
    std::optional<EntropyReport> base_entropy;
    std::vector<QueryAttempt> queries;
    std::vector<ScoredSnippet> scored;  // successfully parsed + searched queries only
    SelectedKnowledge selected;
    bool max_kept_capped = false;
    RenderedPrompt final_prompt;
    std::string final_raw;
    std::optional<OptionLabel> parsed;
    std::optional<bool> correct;  // absent when the question has no gold label
    CallCounts calls;
    double latency_ms = 0.0;
    std::vector<std::string> errors;
};

struct Backends {
    LlmBackend* llm = nullptr;
    SearchBackend* search = nullptr;
};

/// The m sampling attempts for one question, parsed. Deterministic given
/// (cfg.seed, question id) regardless of scheduling.
std::vector<QueryAttempt> sample_query_attempts(const Question& q, const RunConfig& cfg,
                                                LlmBackend& llm, const PromptRegistry& prompts,
                                                CallCounts* calls = nullptr);

/// Successfully parsed queries only, with their original sample indices.
std::vector<SyntheticQuery> generate_queries(const Question& q, const RunConfig& cfg,
                                             LlmBackend& llm, const PromptRegistry& prompts);

/// Runs one question under cfg.mode:
///  - cot: one final completion, no retrieval;
///  - question_only_retrieval: one search with the stem, no filtering;
///  - searchrag_unfiltered: all retrieved snippets, no delta gate;
///  - searchrag: base probe, per-snippet delta, strict selection, final.
/// Per-snippet failures degrade gracefully; QuotaError propagates.
QuestionTrace run_question(const Question& q, const RunConfig& cfg, Backends backends,
                           const PromptRegistry& prompts);

struct RunReport {
    static constexpr int kSchemaVersion = 1;

    RunConfig config;
    std::vector<QuestionTrace> traces;
    int n = 0;          // questions with a gold label
    int n_correct = 0;
    double accuracy = 0.0;
};

/// Runs the dataset with question-level fan-out bounded by cfg.parallelism.
/// Output is identical across parallelism settings; QuotaError aborts.
RunReport run_dataset(const std::vector<Question>& questions, const RunConfig& cfg,
                      Backends backends, const PromptRegistry& prompts);

}  // namespace searchrag
