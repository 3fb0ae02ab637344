#include "searchrag/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <mutex>
#include <thread>

#include "searchrag/errors.hpp"
#include "searchrag/util.hpp"

namespace searchrag {

namespace {

constexpr std::uint64_t kProbeTag = 0x50524F4245ULL;
constexpr std::uint64_t kFinalTag = 0x46494E414CULL;
constexpr size_t kMaxSearchQueryChars = 2048;

std::string stem_as_query(const std::string& stem) {
    std::string q = stem;
    for (char& c : q) {
        if (c == '\n' || c == '\r' || c == '\t') c = ' ';
    }
    if (q.size() > kMaxSearchQueryChars) {
        size_t cut = kMaxSearchQueryChars;
        while (cut > 0 && is_utf8_continuation(static_cast<unsigned char>(q[cut]))) --cut;
        q.resize(cut);
    }
    return q;
}

EntropyReport probe_base(const Question& q, const RunConfig& cfg, LlmBackend& llm,
                         const PromptRegistry& prompts, const EntropyEngine& engine,
                         std::uint64_t seed, CallCounts& calls) {
    RenderedPrompt prompt = prompts.render_uncertainty_probe(q, nullptr);
    ChatRequest req;
    req.system = prompt.system;
    req.user = prompt.user;
    req.temperature = 0.0;
    req.max_tokens = 1;
    req.want_logprobs = true;
    req.top_logprobs = cfg.top_logprobs;
    req.seed = seed;
    ++calls.base_probe;
    ChatResponse resp = llm.complete(req);
    if (!resp.first_token_dist) {
        throw CapabilityError("base probe returned no token distribution");
    }
    return engine.report(*resp.first_token_dist);
}

std::string run_final(const Question& q, const SelectedKnowledge& knowledge, const RunConfig& cfg,
                      LlmBackend& llm, const PromptRegistry& prompts, std::uint64_t seed,
                      QuestionTrace& trace) {
    trace.final_prompt = prompts.render_final(q, knowledge);
    ChatRequest req;
    req.system = trace.final_prompt.system;
    req.user = trace.final_prompt.user;
    req.temperature = 0.0;  // greedy decoding for answers; sampling is for queries
    req.max_tokens = cfg.max_gen_tokens;
    req.want_logprobs = false;
    req.seed = seed;
    ++trace.calls.final_completion;
    return llm.complete(req).text;
}

/// Retrieves snippets for parsed queries in sample order, recording search
/// failures without aborting the question.
std::vector<Snippet> retrieve_all(const std::vector<QueryAttempt>& attempts,
                                  SearchBackend& search, QuestionTrace& trace) {
    std::vector<Snippet> snippets;
    for (const auto& attempt : attempts) {
        if (!attempt.ok) continue;
        SyntheticQuery query{attempt.sample_index, attempt.text, attempt.raw_generation};
        ++trace.calls.search;
        try {
            snippets.push_back(search.search(query));
        } catch (const QuotaError&) {
            throw;
        } catch (const std::exception& e) {
            trace.errors.push_back("search failed for sample " +
                                   std::to_string(attempt.sample_index) + ": " + e.what());
        }
    }
    return snippets;
}

SelectedKnowledge aggregate_unfiltered(const std::vector<Snippet>& snippets) {
    // No delta gate: every retrieved snippet with content goes in, sample
    // order, entropy fields left zeroed.
    SelectedKnowledge out;
    for (const auto& s : snippets) {
        if (s.body.empty()) continue;
        ScoredSnippet item;
        item.snippet = s;
        out.kept.push_back(std::move(item));
    }
    for (size_t i = 0; i < out.kept.size(); ++i) {
        if (i > 0) out.rendered += "\n\n";
        out.rendered += out.kept[i].snippet.body;
    }
    return out;
}

}  // namespace

std::vector<QueryAttempt> sample_query_attempts(const Question& q, const RunConfig& cfg,
                                                LlmBackend& llm, const PromptRegistry& prompts,
                                                CallCounts* calls) {
    RenderedPrompt prompt = prompts.render_query_gen(q);
    std::uint64_t qseed = question_seed(cfg.seed, q.id);
    std::vector<QueryAttempt> attempts;
    attempts.reserve(static_cast<size_t>(cfg.num_queries));
    for (int i = 0; i < cfg.num_queries; ++i) {
        ChatRequest req;
        req.system = prompt.system;
        req.user = prompt.user;
        req.temperature = cfg.gen_temperature;
        req.max_tokens = cfg.max_gen_tokens;
        req.want_logprobs = false;
        req.seed = qseed + static_cast<std::uint64_t>(i);  // consecutive per-sample seeds
        if (calls) ++calls->query_gen;
        ChatResponse resp = llm.complete(req);
        QueryAttempt attempt;
        attempt.sample_index = i;
        attempt.raw_generation = resp.text;
        if (auto text = parse_query(resp.text)) {
            attempt.ok = true;
            attempt.text = *text;
        }
        attempts.push_back(std::move(attempt));
    }
    return attempts;
}

std::vector<SyntheticQuery> generate_queries(const Question& q, const RunConfig& cfg,
                                             LlmBackend& llm, const PromptRegistry& prompts) {
    std::vector<SyntheticQuery> out;
    for (auto& attempt : sample_query_attempts(q, cfg, llm, prompts)) {
        if (attempt.ok) {
            out.push_back({attempt.sample_index, attempt.text, attempt.raw_generation});
        }
    }
    return out;
}

QuestionTrace run_question(const Question& q, const RunConfig& cfg, Backends backends,
                           const PromptRegistry& prompts) {
    q.validate();
    cfg.validate();
    auto started = std::chrono::steady_clock::now();

    QuestionTrace trace;
    trace.question_id = q.id;
    trace.mode = cfg.mode;
    std::uint64_t qseed = question_seed(cfg.seed, q.id);
    std::uint64_t probe_seed = mix_seed(qseed, kProbeTag);
    std::uint64_t final_seed = mix_seed(qseed, kFinalTag);

    try {
        switch (cfg.mode) {
            case Mode::Cot: {
                trace.final_raw = run_final(q, SelectedKnowledge{}, cfg, *backends.llm, prompts,
                                            final_seed, trace);
                break;
            }
            case Mode::QuestionOnlyRetrieval: {
                SyntheticQuery query{0, stem_as_query(q.stem), q.stem};
                trace.queries.push_back({0, true, query.text, q.stem});
                ++trace.calls.search;
                Snippet snippet = backends.search->search(query);
                trace.selected = aggregate_unfiltered({snippet});
                trace.final_raw = run_final(q, trace.selected, cfg, *backends.llm, prompts,
                                            final_seed, trace);
                break;
            }
            case Mode::SearchRagUnfiltered: {
                trace.num_queries = cfg.num_queries;
                trace.queries = sample_query_attempts(q, cfg, *backends.llm, prompts, &trace.calls);
                auto snippets = retrieve_all(trace.queries, *backends.search, trace);
                trace.selected = aggregate_unfiltered(snippets);
                trace.final_raw = run_final(q, trace.selected, cfg, *backends.llm, prompts,
                                            final_seed, trace);
                break;
            }
            case Mode::SearchRag: {
                trace.num_queries = cfg.num_queries;
                EntropyEngine engine = EntropyEngine::for_config(cfg);
                trace.queries = sample_query_attempts(q, cfg, *backends.llm, prompts, &trace.calls);
                // Base entropy is measured once and shared by every snippet.
                trace.base_entropy =
                    probe_base(q, cfg, *backends.llm, prompts, engine, probe_seed, trace.calls);
                auto snippets = retrieve_all(trace.queries, *backends.search, trace);
                for (size_t j = 0; j < snippets.size(); ++j) {
                    ++trace.calls.snippet_probe;
                    trace.scored.push_back(score_snippet(
                        q, snippets[j], *trace.base_entropy, *backends.llm, prompts, engine, cfg,
                        probe_seed + 1 + static_cast<std::uint64_t>(j)));
                }
                trace.selected = select(trace.scored, cfg.max_kept, &trace.max_kept_capped);
                trace.final_raw = run_final(q, trace.selected, cfg, *backends.llm, prompts,
                                            final_seed, trace);
                break;
            }
        }
        trace.parsed = parse_answer(trace.final_raw, q);
    } catch (const QuotaError&) {
        throw;
    } catch (const std::exception& e) {
        trace.errors.push_back(std::string("question failed: ") + e.what());
        trace.parsed = std::nullopt;
    }

    if (q.gold) trace.correct = trace.parsed && *trace.parsed == *q.gold;
    trace.latency_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - started)
                           .count();
    return trace;
}

RunReport run_dataset(const std::vector<Question>& questions, const RunConfig& cfg,
                      Backends backends, const PromptRegistry& prompts) {
    cfg.validate();
    RunReport report;
    report.config = cfg;
    report.traces.resize(questions.size());

    std::atomic<size_t> next{0};
    std::atomic<bool> abort{false};
    std::mutex error_mutex;
    std::exception_ptr fatal;

    auto worker = [&] {
        while (!abort.load()) {
            size_t i = next.fetch_add(1);
            if (i >= questions.size()) return;
            try {
                report.traces[i] = run_question(questions[i], cfg, backends, prompts);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!fatal) fatal = std::current_exception();
                abort.store(true);
                return;
            }
        }
    };

    size_t n_workers = std::min<size_t>(static_cast<size_t>(cfg.parallelism), questions.size());
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_workers);
        for (size_t t = 0; t < n_workers; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (fatal) std::rethrow_exception(fatal);

    for (const auto& trace : report.traces) {
        if (!trace.correct.has_value()) continue;
        ++report.n;
        if (*trace.correct) ++report.n_correct;
    }
    report.accuracy = report.n > 0 ? static_cast<double>(report.n_correct) / report.n : 0.0;
    return report;
}

}  // namespace searchrag
