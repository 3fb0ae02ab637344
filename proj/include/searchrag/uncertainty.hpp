#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "searchrag/core_types.hpp"
#include "searchrag/llm_backend.hpp"
#include "searchrag/prompts.hpp"

namespace searchrag {

/// Name of the pooled bucket for unmapped token mass + top-k residual.
inline constexpr const char* kOtherBucket = "OTHER";

/// Maps raw first tokens to option labels. Accepts "A", " A", "a", "A.",
/// "A)", "(A" and the analogous forms for B-D; leading whitespace stripped,
/// case-insensitive. Everything else is unmapped and pools into OTHER.
class AnswerTokenMap {
public:
    static AnswerTokenMap standard();

    std::optional<OptionLabel> lookup(std::string_view raw_token) const;

private:
    std::unordered_map<std::string, OptionLabel> forms_;
};

/// Shannon entropy in bits over the distribution's buckets; the residual
/// counts as one bucket. Zero-probability buckets contribute nothing.
double entropy_bits(const TokenDistribution& dist);

/// Merges raw-token mass into per-label buckets; unmapped tokens and the
/// residual pool into a single trailing OTHER bucket. Total mass is
/// preserved and the number of nonzero buckets never grows.
TokenDistribution canonicalize(const TokenDistribution& dist, const AnswerTokenMap& map);

struct EntropyReport {
    double bits = 0.0;
    TokenDistribution effective_dist;

    bool operator==(const EntropyReport&) const = default;
};

/// Computes EntropyReports in the configured space: label buckets + OTHER
/// (default) or the raw top-k tokens.
class EntropyEngine {
public:
    EntropyEngine(EntropySpace space, AnswerTokenMap map)
        : space_(space), map_(std::move(map)) {}

    static EntropyEngine for_config(const RunConfig& cfg) {
        return EntropyEngine(cfg.entropy_space, AnswerTokenMap::standard());
    }

    EntropyReport report(const TokenDistribution& first_token_dist) const;

private:
    EntropySpace space_;
    AnswerTokenMap map_;
};

/// Probes the model with the snippet-augmented prompt and measures the
/// entropy drop against `base`. A failed probe is returned with
/// probe_failed set (never selectable) rather than failing the question.
ScoredSnippet score_snippet(const Question& q, const Snippet& snippet, const EntropyReport& base,
                            LlmBackend& backend, const PromptRegistry& prompts,
                            const EntropyEngine& engine, const RunConfig& cfg,
                            std::uint64_t probe_seed);

/// Keeps strictly-positive delta snippets, drops duplicate bodies (highest
/// delta wins), orders by descending delta then ascending sample index, and
/// renders the bodies joined by blank lines. max_kept < 0 means unlimited;
/// *capped reports whether the limit actually bound.
SelectedKnowledge select(const std::vector<ScoredSnippet>& scored, int max_kept = -1,
                         bool* capped = nullptr);

}  // namespace searchrag
