#include <doctest.h>

#include <nlohmann/json.hpp>

#include "searchrag/errors.hpp"
#include "searchrag/harness.hpp"
#include "searchrag/pipeline.hpp"
#include "test_support.hpp"

using namespace searchrag;
using nlohmann::json;
using testsupport::fixture_path;
using testsupport::make_question4;

namespace {

MockLlmBackend load_mock(const std::string& name) {
    return MockLlmBackend(MockScript::load(fixture_path(name).string()));
}

RunConfig base_config(Mode mode, int m, std::uint64_t seed = 7) {
    RunConfig cfg;
    cfg.mode = mode;
    cfg.num_queries = m;
    cfg.seed = seed;
    return cfg;
}

/// Search backend that fails on demand, for degradation tests.
class FlakySearchBackend : public SearchBackend {
public:
    explicit FlakySearchBackend(SearchBackend* inner, std::string fail_substring,
                                bool quota = false)
        : inner_(inner), fail_substring_(std::move(fail_substring)), quota_(quota) {}

    Snippet search(const SyntheticQuery& query) override {
        if (!fail_substring_.empty() && query.text.find(fail_substring_) != std::string::npos) {
            if (quota_) throw QuotaError("simulated quota exhaustion");
            throw TransportError("simulated transport failure");
        }
        return inner_->search(query);
    }

private:
    SearchBackend* inner_;
    std::string fail_substring_;
    bool quota_;
};

}  // namespace

TEST_CASE("generate_queries") {
    auto llm = load_mock("fx10/mock.json");
    auto prompts = PromptRegistry::builtin();
    Question q = make_question4("fx0 style");

    SUBCASE("zero samples yields an empty list") {
        auto queries = generate_queries(q, base_config(Mode::SearchRag, 0), llm, prompts);
        CHECK(queries.empty());
    }

    SUBCASE("four samples against a rotation with one marker-less entry yield three") {
        // The committed rotation has 4 entries, 3 containing the marker.
        auto cfg = base_config(Mode::SearchRag, 4);
        auto queries = generate_queries(q, cfg, llm, prompts);
        REQUIRE(queries.size() == 3);
        std::vector<std::string> texts;
        for (const auto& query : queries) texts.push_back(query.text);
        std::sort(texts.begin(), texts.end());
        CHECK(texts == std::vector<std::string>{"fxtopic alpha", "fxtopic beta", "fxtopic gamma"});
        for (const auto& query : queries) {
            CHECK(query.text.find('\n') == std::string::npos);
            CHECK_FALSE(query.raw_generation.empty());
        }
    }

    SUBCASE("attempts keep failed parses with their sample indices") {
        auto cfg = base_config(Mode::SearchRag, 4);
        CallCounts calls;
        auto attempts = sample_query_attempts(q, cfg, llm, prompts, &calls);
        REQUIRE(attempts.size() == 4);
        CHECK(calls.query_gen == 4);
        int failures = 0;
        for (const auto& a : attempts) {
            if (!a.ok) {
                ++failures;
                CHECK(a.text.empty());
                CHECK_FALSE(a.raw_generation.empty());
            }
        }
        CHECK(failures == 1);
    }

    SUBCASE("same seed reproduces identical attempts") {
        auto cfg = base_config(Mode::SearchRag, 4, 99);
        auto a = sample_query_attempts(q, cfg, llm, prompts);
        auto b = sample_query_attempts(q, cfg, llm, prompts);
        CHECK(a == b);
    }
}

TEST_CASE("two-snippet selection inside run_question") {
    // Hand-executed expectation: base entropy H(0.7,.1,.1,.1) = 1.3568;
    // helpful snippet probes to H(0.95,.03,.01,.01) = 0.3349 (delta +1.02,
    // kept); noisy snippet probes to uniform 2.0 (delta -0.64, dropped).
    MockScript script = MockScript::from_json(json::parse(R"({
      "rules": [
        {"match_all": ["HELPFUL", "Answer Choices:"],
         "dist": {"A": 0.95, "B": 0.03, "C": 0.01, "D": 0.01}},
        {"match_all": ["NOISY", "Answer Choices:"],
         "dist": {"A": 0.25, "B": 0.25, "C": 0.25, "D": 0.25}},
        {"match": "Answer Choices:", "dist": {"A": 0.7, "B": 0.1, "C": 0.1, "D": 0.1}},
        {"match": "single short query",
         "rotation": ["Search_query: helpful leaflet", "Search_query: noisy pamphlet"]},
        {"match_all": ["answer_choice", "HELPFUL"], "text": "answer_choice: A"},
        {"text": "answer_choice: D", "dist": {"A": 0.25, "B": 0.25, "C": 0.25, "D": 0.25}}
      ]
    })"));
    MockLlmBackend llm(std::move(script));
    Corpus corpus = Corpus::from_docs(
        {{"h", "helpful leaflet", "HELPFUL the gold fact is alpha."},
         {"n", "noisy pamphlet", "NOISY distracting chatter."}});
    CorpusBackend search(std::move(corpus), 1500);
    auto prompts = PromptRegistry::builtin();
    Question q = make_question4("two-snip");
    q.gold = OptionLabel::A;

    auto trace = run_question(q, base_config(Mode::SearchRag, 2), {&llm, &search}, prompts);

    REQUIRE(trace.base_entropy.has_value());
    CHECK(trace.base_entropy->bits == doctest::Approx(1.3567796494470397).epsilon(1e-12));
    REQUIRE(trace.scored.size() == 2);
    REQUIRE(trace.selected.kept.size() == 1);
    CHECK(trace.selected.kept[0].snippet.body.find("HELPFUL") != std::string::npos);
    CHECK(trace.final_prompt.user.find("HELPFUL") != std::string::npos);
    CHECK(trace.final_prompt.user.find("NOISY") == std::string::npos);
    CHECK(trace.parsed == OptionLabel::A);
    CHECK(trace.correct == true);

    for (const auto& s : trace.scored) {
        CHECK(std::abs(s.delta_h_bits - (trace.base_entropy->bits - s.post_entropy_bits)) <
              1e-12);
    }
}

TEST_CASE("mode contracts") {
    auto llm = load_mock("fx10/mock.json");
    auto questions = load_dataset(fixture_path("fx10/questions.jsonl"));
    auto prompts = PromptRegistry::builtin();

    // Cache with the three bodies the fx10 mock expects.
    namespace fs = std::filesystem;
    fs::path cache_dir = fs::temp_directory_path() / "searchrag_fx10_cache";
    fs::remove_all(cache_dir);
    CacheStore store(cache_dir);
    auto put = [&](const std::string& query, const std::string& title, const std::string& text) {
        SearchResponse resp;
        resp.organic = {{1, title, text}};
        store.put(query, resp);
    };
    put("fxtopic alpha", "Alpha catalog", "ALPHAFACT the alpha property is pinned.");
    put("fxtopic beta", "Beta catalog", "BETAFACT the beta property is ambiguous.");
    put("fxtopic gamma", "Gamma catalog", "GAMMAFACT the gamma property is partial.");
    CacheBackend search(CacheStore(cache_dir), 1500);
    Backends backends{&llm, &search};

    SUBCASE("cot issues exactly one llm call and no searches") {
        auto trace = run_question(questions[0], base_config(Mode::Cot, 4), backends, prompts);
        CHECK(trace.calls.query_gen == 0);
        CHECK(trace.calls.base_probe == 0);
        CHECK(trace.calls.snippet_probe == 0);
        CHECK(trace.calls.final_completion == 1);
        CHECK(trace.calls.llm_total() == 1);
        CHECK(trace.calls.search == 0);
        CHECK(trace.queries.empty());
        CHECK(trace.selected.kept.empty());
        CHECK_FALSE(trace.base_entropy.has_value());
    }

    SUBCASE("question-only retrieval searches the stem verbatim without probes") {
        auto trace =
            run_question(questions[0], base_config(Mode::QuestionOnlyRetrieval, 4), backends,
                         prompts);
        REQUIRE(trace.queries.size() == 1);
        CHECK(trace.queries[0].text == questions[0].stem);
        CHECK(trace.calls.search == 1);
        CHECK(trace.calls.base_probe == 0);
        CHECK(trace.calls.snippet_probe == 0);
        CHECK(trace.calls.final_completion == 1);
        CHECK(trace.scored.empty());
        // The stem matches no cache entry, so the snippet is empty and the
        // final prompt reduces to the bare form.
        CHECK(trace.selected.kept.empty());
    }

    SUBCASE("searchrag accounting: m gen calls, one base probe, one probe per snippet") {
        auto trace = run_question(questions[0], base_config(Mode::SearchRag, 4), backends,
                                  prompts);
        CHECK(trace.calls.query_gen == 4);
        CHECK(trace.calls.base_probe == 1);
        CHECK(trace.calls.snippet_probe == 3);  // one attempt lacks the marker
        CHECK(trace.calls.final_completion == 1);
        CHECK(trace.calls.search == 3);
        REQUIRE(trace.scored.size() == 3);
        // alpha (+0.643) and gamma (+0.078) pass the gate; beta is exactly 0.
        REQUIRE(trace.selected.kept.size() == 2);
        CHECK(trace.selected.kept[0].snippet.body.find("ALPHAFACT") != std::string::npos);
        CHECK(trace.selected.kept[1].snippet.body.find("GAMMAFACT") != std::string::npos);
        for (const auto& kept : trace.selected.kept) {
            bool found = false;
            for (const auto& s : trace.scored) {
                if (s.snippet.body == kept.snippet.body) found = true;
            }
            CHECK(found);
        }
    }

    SUBCASE("unfiltered aggregates every retrieved snippet in sample order") {
        auto trace = run_question(questions[0], base_config(Mode::SearchRagUnfiltered, 4),
                                  backends, prompts);
        CHECK(trace.calls.base_probe == 0);
        CHECK(trace.calls.snippet_probe == 0);
        CHECK(trace.calls.search == 3);
        REQUIRE(trace.selected.kept.size() == 3);
        int prev = -1;
        for (const auto& kept : trace.selected.kept) {
            CHECK(kept.snippet.query.sample_index > prev);
            prev = kept.snippet.query.sample_index;
        }
        CHECK(trace.final_prompt.user.find("BETAFACT") != std::string::npos);
    }

    SUBCASE("all-nonpositive selection reduces the final prompt to the cot prompt") {
        // A script whose probes never beat the base: every delta is <= 0.
        MockScript script = MockScript::from_json(json::parse(R"({
          "rules": [
            {"match": "Answer Choices:", "dist": {"A": 0.25, "B": 0.25, "C": 0.25, "D": 0.25}},
            {"match": "single short query", "rotation": ["Search_query: fxtopic alpha"]},
            {"text": "answer_choice: A", "dist": {"A": 0.25, "B": 0.25, "C": 0.25, "D": 0.25}}
          ]
        })"));
        MockLlmBackend flat_llm{std::move(script)};
        Backends flat{&flat_llm, &search};
        auto rag = run_question(questions[0], base_config(Mode::SearchRag, 2), flat, prompts);
        auto cot = run_question(questions[0], base_config(Mode::Cot, 0), flat, prompts);
        CHECK(rag.selected.kept.empty());
        CHECK(rag.final_prompt.user == cot.final_prompt.user);
        CHECK(rag.final_prompt.system == cot.final_prompt.system);
    }

    fs::remove_all(cache_dir);
}

TEST_CASE("run_question degrades gracefully on per-snippet search failures") {
    auto llm = load_mock("fx10/mock.json");
    auto questions = load_dataset(fixture_path("fx10/questions.jsonl"));
    auto prompts = PromptRegistry::builtin();
    Corpus corpus = Corpus::from_docs({{"a", "fxtopic alpha catalog", "ALPHAFACT pinned."},
                                       {"g", "fxtopic gamma catalog", "GAMMAFACT partial."}});
    CorpusBackend inner(std::move(corpus), 1500);

    SUBCASE("transport failure on one query skips only that snippet") {
        FlakySearchBackend flaky(&inner, "beta");
        auto trace = run_question(questions[0], base_config(Mode::SearchRag, 4),
                                  {&llm, &flaky}, prompts);
        CHECK(trace.calls.search == 3);
        CHECK(trace.scored.size() == 2);  // beta search failed, others scored
        REQUIRE(trace.errors.size() == 1);
        CHECK(trace.errors[0].find("search failed") != std::string::npos);
        CHECK(trace.parsed.has_value());
    }

    SUBCASE("quota failure propagates out of the question") {
        FlakySearchBackend quota(&inner, "alpha", /*quota=*/true);
        CHECK_THROWS_AS(run_question(questions[0], base_config(Mode::SearchRag, 4),
                                     {&llm, &quota}, prompts),
                        QuotaError);
    }

    SUBCASE("llm failure yields an annotated trace instead of an exception") {
        MockScript script = MockScript::from_json(json::parse(R"({
          "rules": [{"text": "irrelevant"}]
        })"));
        MockLlmBackend no_dist_llm{std::move(script)};  // base probe will fail
        auto trace = run_question(questions[0], base_config(Mode::SearchRag, 0),
                                  {&no_dist_llm, &inner}, prompts);
        CHECK_FALSE(trace.parsed.has_value());
        CHECK(trace.correct == false);
        REQUIRE(!trace.errors.empty());
        CHECK(trace.errors[0].find("question failed") != std::string::npos);
    }
}

TEST_CASE("case study: contraceptive question corrects itself through retrieval") {
    auto llm = load_mock("case_study/mock.json");
    Corpus corpus = Corpus::load(fixture_path("case_study/corpus.jsonl"));
    CorpusBackend search(std::move(corpus), 1500, /*top_n=*/1);
    auto prompts = PromptRegistry::builtin();

    Question q;
    q.id = "cs1";
    q.stem =
        "A 17-year-old girl with severe acne vulgaris is started on long-term combined oral "
        "contraceptive pills. This medication decreases her risk of developing which of the "
        "following conditions?";
    q.options = {"Hypertension", "Ovarian cancer", "Cervical cancer", "Breast cancer"};
    q.gold = OptionLabel::B;

    auto trace = run_question(q, base_config(Mode::SearchRag, 3, 21), {&llm, &search}, prompts);

    REQUIRE(trace.scored.size() == 3);
    REQUIRE(trace.selected.kept.size() == 3);  // every fact lowers entropy
    CHECK(trace.selected.kept[0].snippet.body.find("lower risk of ovarian cancer") !=
          std::string::npos);
    for (const auto& s : trace.selected.kept) {
        CHECK(s.delta_h_bits > 0.0);
    }
    // All three fact bodies reach the final prompt.
    CHECK(trace.final_prompt.user.find("lower risk of ovarian cancer") != std::string::npos);
    CHECK(trace.final_prompt.user.find("risk of cervical cancer") != std::string::npos);
    CHECK(trace.final_prompt.user.find("breast cancer among recent users") != std::string::npos);
    CHECK(trace.parsed == OptionLabel::B);
    CHECK(trace.correct == true);
}

TEST_CASE("run_dataset determinism and aggregation") {
    auto llm = load_mock("fx10/mock.json");
    auto questions = load_dataset(fixture_path("fx10/questions.jsonl"));
    auto prompts = PromptRegistry::builtin();

    namespace fs = std::filesystem;
    fs::path cache_dir = fs::temp_directory_path() / "searchrag_fx10_cache_ds";
    fs::remove_all(cache_dir);
    CacheStore store(cache_dir);
    auto put = [&](const std::string& query, const std::string& title, const std::string& text) {
        SearchResponse resp;
        resp.organic = {{1, title, text}};
        store.put(query, resp);
    };
    put("fxtopic alpha", "Alpha catalog", "ALPHAFACT the alpha property is pinned.");
    put("fxtopic beta", "Beta catalog", "BETAFACT the beta property is ambiguous.");
    put("fxtopic gamma", "Gamma catalog", "GAMMAFACT the gamma property is partial.");
    CacheBackend search(CacheStore(cache_dir), 1500);
    Backends backends{&llm, &search};

    SUBCASE("seven of ten fixture answers are correct") {
        auto report = run_dataset(questions, base_config(Mode::SearchRag, 4), backends, prompts);
        CHECK(report.n == 10);
        CHECK(report.n_correct == 7);
        CHECK(report.accuracy == 0.7);
        CHECK(report.traces.size() == questions.size());
        // fx5's reply has no parsable label; it scores incorrect, not dropped.
        CHECK_FALSE(report.traces[5].parsed.has_value());
        CHECK(report.traces[5].correct == false);
        // fx8 exercises the fallback parse.
        CHECK(report.traces[8].parsed == OptionLabel::D);
    }

    SUBCASE("identical runs produce byte-identical reports at any parallelism") {
        auto cfg1 = base_config(Mode::SearchRag, 4);
        auto report_a = run_dataset(questions, cfg1, backends, prompts);
        auto report_b = run_dataset(questions, cfg1, backends, prompts);
        auto cfg8 = cfg1;
        cfg8.parallelism = 8;
        auto report_c = run_dataset(questions, cfg8, backends, prompts);
        auto dump_a = report_to_json(report_a).dump();
        CHECK(dump_a == report_to_json(report_b).dump());
        // Parallelism is not part of the payload being compared.
        auto ja = report_to_json(report_a);
        auto jc = report_to_json(report_c);
        ja["config"].erase("parallelism");
        jc["config"].erase("parallelism");
        CHECK(ja.dump() == jc.dump());
    }

    SUBCASE("gold-free questions are excluded from the denominator") {
        auto no_gold = questions;
        no_gold[0].gold.reset();
        auto report = run_dataset(no_gold, base_config(Mode::Cot, 0), backends, prompts);
        CHECK(report.traces.size() == 10);
        CHECK(report.n == 9);
        CHECK_FALSE(report.traces[0].correct.has_value());
    }

    SUBCASE("quota aborts the whole dataset run") {
        Corpus corpus = Corpus::from_docs({{"a", "fxtopic alpha catalog", "ALPHAFACT pinned."}});
        CorpusBackend inner(std::move(corpus), 1500);
        FlakySearchBackend quota(&inner, "alpha", /*quota=*/true);
        CHECK_THROWS_AS(
            run_dataset(questions, base_config(Mode::SearchRag, 4), {&llm, &quota}, prompts),
            QuotaError);
    }

    fs::remove_all(cache_dir);
}

TEST_CASE("question-only mode truncates oversized stems for retrieval") {
    MockScript script = MockScript::from_json(nlohmann::json::parse(R"({
      "rules": [{"text": "answer_choice: A", "dist": {"A": 1.0}}]
    })"));
    MockLlmBackend llm(std::move(script));

    class CapturingSearch : public SearchBackend {
    public:
        Snippet search(const SyntheticQuery& query) override {
            last_text = query.text;
            Snippet s;
            s.query = query;
            return s;
        }
        std::string last_text;
    } search;

    Question q = make_question4("long-stem");
    q.stem = std::string(3000, 'x') + "\ntail line";
    auto prompts = PromptRegistry::builtin();
    auto trace =
        run_question(q, base_config(Mode::QuestionOnlyRetrieval, 0), {&llm, &search}, prompts);
    CHECK(search.last_text.size() == 2048);
    CHECK(search.last_text.find('\n') == std::string::npos);
    REQUIRE(trace.queries.size() == 1);
    CHECK(trace.queries[0].text.size() == 2048);
}

TEST_CASE("max_kept caps selection and the trace records the binding") {
    auto llm = load_mock("planted/mock.json");
    auto questions = load_dataset(fixture_path("planted/questions.jsonl"));
    CorpusBackend search(Corpus::load(fixture_path("planted/corpus.jsonl")), 1500);
    auto prompts = PromptRegistry::builtin();

    auto cfg = base_config(Mode::SearchRag, 4, 11);
    cfg.max_kept = 0;
    auto trace = run_question(questions[1], cfg, {&llm, &search}, prompts);
    CHECK(trace.selected.kept.empty());
    CHECK(trace.max_kept_capped);

    cfg.max_kept = -1;
    auto unlimited = run_question(questions[1], cfg, {&llm, &search}, prompts);
    CHECK_FALSE(unlimited.max_kept_capped);
    CHECK(unlimited.selected.kept.size() == 1);
}

TEST_CASE("question-only retrieval injects the snippet without any gate") {
    MockScript script = MockScript::from_json(nlohmann::json::parse(R"({
      "rules": [
        {"match_all": ["answer_choice", "LEDGERFACT"], "text": "answer_choice: B"},
        {"text": "answer_choice: D", "dist": {"A": 0.25, "B": 0.25, "C": 0.25, "D": 0.25}}
      ]
    })"));
    MockLlmBackend llm(std::move(script));
    Corpus corpus = Corpus::from_docs(
        {{"d", "ledger basin record", "LEDGERFACT the deposits sit in basin seven."}});
    CorpusBackend search(std::move(corpus), 1500);
    auto prompts = PromptRegistry::builtin();

    Question q = make_question4("qo-content");
    q.stem = "Which basin does the ledger record for the deposits?";
    q.gold = OptionLabel::B;

    auto trace =
        run_question(q, base_config(Mode::QuestionOnlyRetrieval, 0), {&llm, &search}, prompts);
    CHECK(trace.calls.search == 1);
    CHECK(trace.calls.base_probe == 0);
    CHECK(trace.calls.snippet_probe == 0);
    REQUIRE(trace.selected.kept.size() == 1);
    CHECK(trace.final_prompt.user.find("LEDGERFACT") != std::string::npos);
    CHECK(trace.parsed == OptionLabel::B);
    CHECK(trace.correct == true);
}
