#include <doctest.h>

#include <nlohmann/json.hpp>

#include <random>

#include "searchrag/core_types.hpp"
#include "test_support.hpp"

using namespace searchrag;
using nlohmann::json;
using testsupport::make_dist;
using testsupport::make_question;

TEST_CASE("option labels order and parse") {
    CHECK(OptionLabel::A < OptionLabel::B);
    CHECK(OptionLabel::B < OptionLabel::C);
    CHECK(OptionLabel::C < OptionLabel::D);
    CHECK(to_char(OptionLabel::C) == 'C');
    CHECK(option_from_char('b') == OptionLabel::B);
    CHECK(option_from_char('E') == std::nullopt);
    CHECK(option_from_string("D") == OptionLabel::D);
    CHECK(option_from_string("AB") == std::nullopt);
}

TEST_CASE("question invariants") {
    CHECK_NOTHROW(make_question().validate());

    auto bad = make_question();
    bad.stem.clear();
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = make_question();
    bad.options = {"only one"};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = make_question();
    bad.options = {"a", "b", "c", "d", "e"};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = make_question();
    bad.gold = OptionLabel::D;  // only two options
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    auto inference_only = make_question();
    inference_only.gold.reset();
    CHECK_NOTHROW(inference_only.validate());
}

TEST_CASE("token distribution mass invariant") {
    CHECK_NOTHROW(make_dist({{"A", 0.5}, {"B", 0.5}}).validate());
    CHECK_NOTHROW(make_dist({{"A", 0.3}}, 0.7).validate());

    CHECK_THROWS_AS(make_dist({{"A", 0.5}}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(make_dist({{"A", 0.6}, {"A", 0.4}}).validate(), std::invalid_argument);
    CHECK_THROWS_AS(make_dist({{"A", 1.2}}, 0.0).validate(), std::invalid_argument);
    CHECK_THROWS_AS(make_dist({{"A", 0.5}}, 0.6).validate(), std::invalid_argument);
    CHECK_THROWS_AS(make_dist({{"A", -0.1}}, 1.1).validate(), std::invalid_argument);

    // Tolerance band of 1e-6 around unit mass.
    CHECK_NOTHROW(make_dist({{"A", 0.5}, {"B", 0.5 + 5e-7}}).validate());
    CHECK_THROWS_AS(make_dist({{"A", 0.5}, {"B", 0.5 + 5e-6}}).validate(),
                    std::invalid_argument);
}

TEST_CASE("mode and entropy space names") {
    for (Mode m : {Mode::Cot, Mode::QuestionOnlyRetrieval, Mode::SearchRag,
                   Mode::SearchRagUnfiltered}) {
        CHECK(mode_from_string(to_string(m)) == m);
    }
    CHECK(mode_from_string("question-only") == Mode::QuestionOnlyRetrieval);
    CHECK(mode_from_string("searchrag-unfiltered") == Mode::SearchRagUnfiltered);
    CHECK(mode_from_string("bogus") == std::nullopt);
    CHECK(entropy_space_from_string("labels") == EntropySpace::Labels);
    CHECK(entropy_space_from_string("raw") == EntropySpace::Raw);
}

TEST_CASE("run config validation") {
    RunConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.parallelism = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = RunConfig{};
    cfg.gen_temperature = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = RunConfig{};
    cfg.num_queries = -1;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

namespace {

std::string random_text(std::mt19937_64& rng, size_t max_len) {
    static const std::string alphabet =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 {}\"'\n:/\\.,;-";
    std::uniform_int_distribution<size_t> len(1, max_len);
    std::uniform_int_distribution<size_t> pick(0, alphabet.size() - 1);
    std::string s;
    size_t n = len(rng);
    for (size_t i = 0; i < n; ++i) s.push_back(alphabet[pick(rng)]);
    return s;
}

Question random_question(std::mt19937_64& rng) {
    Question q;
    q.id = "id-" + std::to_string(rng() % 100000);
    q.stem = random_text(rng, 120);
    size_t n_opts = 2 + rng() % 3;
    for (size_t i = 0; i < n_opts; ++i) q.options.push_back(random_text(rng, 40));
    if (rng() % 2) q.gold = static_cast<OptionLabel>(rng() % n_opts);
    return q;
}

Snippet random_snippet(std::mt19937_64& rng) {
    Snippet s;
    s.query = {static_cast<int>(rng() % 32), random_text(rng, 40), random_text(rng, 80)};
    s.body = random_text(rng, 200);
    if (rng() % 2) {
        SourcePart kg;
        kg.kind = SourcePart::Kind::KnowledgeGraph;
        kg.title = random_text(rng, 20);
        kg.text = random_text(rng, 60);
        kg.attributes.emplace_back("k", random_text(rng, 10));
        s.source_parts.push_back(kg);
    }
    size_t n_org = rng() % 4;
    for (size_t i = 0; i < n_org; ++i) {
        SourcePart part;
        part.kind = SourcePart::Kind::Organic;
        part.rank = static_cast<int>(i) + 1;
        part.title = random_text(rng, 20);
        part.text = random_text(rng, 60);
        s.source_parts.push_back(part);
    }
    return s;
}

}  // namespace

TEST_CASE("JSON round-trips preserve every core type") {
    std::mt19937_64 rng(123);
    for (int trial = 0; trial < 100; ++trial) {
        Question q = random_question(rng);
        json jq = q;
        CHECK(jq.get<Question>() == q);

        TokenDistribution d;
        size_t n = 1 + rng() % 5;
        double left = 1.0;
        for (size_t i = 0; i < n; ++i) {
            double p = left * 0.3;
            d.entries.push_back({"t" + std::to_string(i), p});
            left -= p;
        }
        d.residual = left;
        json jd = d;
        CHECK(jd.get<TokenDistribution>() == d);

        Snippet s = random_snippet(rng);
        json js = s;
        CHECK(js.get<Snippet>() == s);

        ScoredSnippet scored;
        scored.snippet = s;
        scored.post_entropy_bits = 1.25;
        scored.delta_h_bits = 0.75;
        scored.probe_failed = (rng() % 2) == 0;
        json jsc = scored;
        CHECK(jsc.get<ScoredSnippet>() == scored);

        SelectedKnowledge k;
        k.kept = {scored};
        k.rendered = s.body;
        json jk = k;
        CHECK(jk.get<SelectedKnowledge>() == k);
    }

    RunConfig cfg;
    cfg.mode = Mode::SearchRagUnfiltered;
    cfg.num_queries = 16;
    cfg.seed = 424242;
    cfg.entropy_space = EntropySpace::Raw;
    cfg.max_kept = 5;
    json jc = cfg;
    CHECK(jc.get<RunConfig>() == cfg);
}

TEST_CASE("question JSON rejects malformed inputs") {
    CHECK_THROWS(json::parse(R"({"id":"x","question":"q?","options":{"A":"a"}})")
                     .get<Question>());  // one option
    CHECK_THROWS(json::parse(R"({"id":"x","question":"q?","options":{"A":"a","C":"c"}})")
                     .get<Question>());  // gap in labels
    CHECK_THROWS(json::parse(R"({"id":"x","question":"q?","options":{"A":"a","B":"b"},"answer":"Z"})")
                     .get<Question>());  // invalid label
    CHECK_THROWS(json::parse(R"({"id":"x","options":{"A":"a","B":"b"}})").get<Question>());
}
