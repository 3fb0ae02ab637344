#include "searchrag/uncertainty.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <map>

#include "searchrag/errors.hpp"
#include "searchrag/util.hpp"

namespace searchrag {

AnswerTokenMap AnswerTokenMap::standard() {
    AnswerTokenMap map;
    for (int i = 0; i < 4; ++i) {
        auto label = static_cast<OptionLabel>(i);
        char c = static_cast<char>('a' + i);
        map.forms_[std::string(1, c)] = label;
        map.forms_[std::string(1, c) + "."] = label;
        map.forms_[std::string(1, c) + ")"] = label;
        map.forms_["(" + std::string(1, c)] = label;
    }
    return map;
}

std::optional<OptionLabel> AnswerTokenMap::lookup(std::string_view raw_token) const {
    size_t start = 0;
    while (start < raw_token.size() &&
           std::isspace(static_cast<unsigned char>(raw_token[start]))) {
        ++start;
    }
    std::string key = to_lower(raw_token.substr(start));
    auto it = forms_.find(key);
    if (it == forms_.end()) return std::nullopt;
    return it->second;
}

double entropy_bits(const TokenDistribution& dist) {
    double h = 0.0;
    for (const auto& e : dist.entries) {
        if (e.prob > 0.0) h -= e.prob * std::log2(e.prob);
    }
    if (dist.residual > 0.0) h -= dist.residual * std::log2(dist.residual);
    return h;
}

TokenDistribution canonicalize(const TokenDistribution& dist, const AnswerTokenMap& map) {
    std::array<double, 4> label_mass{};
    std::array<bool, 4> label_seen{};
    double other = dist.residual;
    for (const auto& e : dist.entries) {
        if (auto label = map.lookup(e.token)) {
            label_mass[static_cast<int>(*label)] += e.prob;
            label_seen[static_cast<int>(*label)] = true;
        } else {
            other += e.prob;
        }
    }
    TokenDistribution out;
    for (int i = 0; i < 4; ++i) {
        if (label_seen[i]) {
            out.entries.push_back({to_string(static_cast<OptionLabel>(i)), label_mass[i]});
        }
    }
    out.entries.push_back({kOtherBucket, other});
    out.residual = 0.0;
    return out;
}

EntropyReport EntropyEngine::report(const TokenDistribution& first_token_dist) const {
    first_token_dist.validate();
    EntropyReport rep;
    rep.effective_dist = space_ == EntropySpace::Labels
                             ? canonicalize(first_token_dist, map_)
                             : first_token_dist;
    rep.bits = entropy_bits(rep.effective_dist);
    return rep;
}

ScoredSnippet score_snippet(const Question& q, const Snippet& snippet, const EntropyReport& base,
                            LlmBackend& backend, const PromptRegistry& prompts,
                            const EntropyEngine& engine, const RunConfig& cfg,
                            std::uint64_t probe_seed) {
    ScoredSnippet scored;
    scored.snippet = snippet;
    RenderedPrompt prompt = prompts.render_uncertainty_probe(q, &snippet);
    ChatRequest req;
    req.system = prompt.system;
    req.user = prompt.user;
    req.temperature = 0.0;  // the probe needs the distribution, not a sample
    req.max_tokens = 1;
    req.want_logprobs = true;
    req.top_logprobs = cfg.top_logprobs;
    req.seed = probe_seed;
    try {
        ChatResponse resp = backend.complete(req);
        if (!resp.first_token_dist) {
            throw CapabilityError("probe response carried no token distribution");
        }
        EntropyReport post = engine.report(*resp.first_token_dist);
        scored.post_entropy_bits = post.bits;
        scored.delta_h_bits = base.bits - post.bits;
    } catch (const QuotaError&) {
        throw;  // quota aborts the whole run
    } catch (const std::exception&) {
        scored.probe_failed = true;
        scored.post_entropy_bits = 0.0;
        scored.delta_h_bits = 0.0;
    }
    return scored;
}

SelectedKnowledge select(const std::vector<ScoredSnippet>& scored, int max_kept, bool* capped) {
    if (capped) *capped = false;
    std::vector<ScoredSnippet> kept;
    for (const auto& s : scored) {
        if (s.probe_failed) continue;
        if (!(s.delta_h_bits > 0.0)) continue;  // strict gate; zero is excluded
        kept.push_back(s);
    }
    std::sort(kept.begin(), kept.end(), [](const ScoredSnippet& a, const ScoredSnippet& b) {
        if (a.delta_h_bits != b.delta_h_bits) return a.delta_h_bits > b.delta_h_bits;
        return a.snippet.query.sample_index < b.snippet.query.sample_index;
    });
    // Set semantics over bodies: the first (highest-delta) instance wins.
    std::vector<ScoredSnippet> deduped;
    for (auto& s : kept) {
        bool duplicate = false;
        for (const auto& existing : deduped) {
            if (existing.snippet.body == s.snippet.body) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) deduped.push_back(std::move(s));
    }
    if (max_kept >= 0 && deduped.size() > static_cast<size_t>(max_kept)) {
        deduped.resize(static_cast<size_t>(max_kept));
        if (capped) *capped = true;
    }
    SelectedKnowledge out;
    out.kept = std::move(deduped);
    for (size_t i = 0; i < out.kept.size(); ++i) {
        if (i > 0) out.rendered += "\n\n";
        out.rendered += out.kept[i].snippet.body;
    }
    return out;
}

}  // namespace searchrag
