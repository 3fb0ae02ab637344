#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "searchrag/errors.hpp"
#include "searchrag/harness.hpp"
#include "searchrag/llm_backend.hpp"
#include "searchrag/pipeline.hpp"
#include "searchrag/prompts.hpp"
#include "searchrag/search_backend.hpp"
#include "searchrag/uncertainty.hpp"

namespace {

using namespace searchrag;

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitUsage = 2;
constexpr int kExitQuota = 3;

struct RunOptions {
    std::string dataset;
    std::string mode = "searchrag";
    int num_queries = 32;
    double temperature = 2.0;
    int max_gen_tokens = 512;
    int top_logprobs = 20;
    std::uint64_t seed = 0;
    std::string llm = "http";
    std::string search = "serper";
    std::string cache_dir;
    std::string corpus;
    int parallelism = 1;
    int max_kept = -1;
    std::string entropy_space = "labels";
    std::string prompt_dir;
    std::string output = ".";
    bool traces = false;
    std::string sweep;
};

std::unique_ptr<LlmBackend> make_llm(const std::string& selector) {
    if (selector == "http") return std::make_unique<HttpLlmBackend>(HttpLlmConfig::from_env());
    if (selector.rfind("http:", 0) == 0 && selector.find("://") == std::string::npos) {
        return std::make_unique<HttpLlmBackend>(HttpLlmConfig::from_file(selector.substr(5)));
    }
    if (selector.rfind("mock:", 0) == 0) {
        return std::make_unique<MockLlmBackend>(MockScript::load(selector.substr(5)));
    }
    throw CLI::ValidationError("--llm must be 'http', 'http:<config.json>' or 'mock:<script.json>'");
}

std::unique_ptr<SearchBackend> make_search(const RunOptions& opts, const RunConfig& cfg) {
    if (opts.search == "serper") {
        std::optional<CacheStore> cache;
        if (!opts.cache_dir.empty()) cache.emplace(opts.cache_dir);
        return std::make_unique<SerperBackend>(SerperConfig::from_env(), cfg.max_snippet_chars,
                                               std::move(cache));
    }
    if (opts.search == "cache") {
        if (opts.cache_dir.empty()) throw CLI::ValidationError("--search cache needs --cache-dir");
        return std::make_unique<CacheBackend>(CacheStore(opts.cache_dir), cfg.max_snippet_chars);
    }
    if (opts.search == "corpus") {
        if (opts.corpus.empty()) throw CLI::ValidationError("--search corpus needs --corpus");
        return std::make_unique<CorpusBackend>(Corpus::load(opts.corpus), cfg.max_snippet_chars);
    }
    throw CLI::ValidationError("--search must be serper, cache, or corpus");
}

std::vector<int> parse_sweep(const std::string& sweep) {
    const std::string prefix = "num-queries=";
    if (sweep.rfind(prefix, 0) != 0) {
        throw CLI::ValidationError("--sweep expects num-queries=<v1,v2,...>");
    }
    std::vector<int> values;
    std::string rest = sweep.substr(prefix.size());
    size_t pos = 0;
    while (pos <= rest.size()) {
        size_t comma = rest.find(',', pos);
        std::string item = rest.substr(pos, comma == std::string::npos ? std::string::npos
                                                                       : comma - pos);
        if (!item.empty()) {
            try {
                values.push_back(std::stoi(item));
            } catch (const std::exception&) {
                throw CLI::ValidationError("--sweep value is not an integer: " + item);
            }
            if (values.back() < 0) {
                throw CLI::ValidationError("--sweep values must be >= 0");
            }
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (values.empty()) throw CLI::ValidationError("--sweep list is empty");
    return values;
}

void print_run_stats(const RunReport& report) {
    CallCounts calls = total_calls(report);
    std::printf("%s: accuracy %d/%d = %.4f\n", report_label(report).c_str(), report.n_correct,
                report.n, report.accuracy);
    std::printf("  llm calls: query_gen=%d base_probe=%d snippet_probe=%d final=%d | search=%d\n",
                calls.query_gen, calls.base_probe, calls.snippet_probe, calls.final_completion,
                calls.search);
}

int do_run(const RunOptions& opts) {
    RunConfig cfg;
    auto mode = mode_from_string(opts.mode);
    if (!mode) throw CLI::ValidationError("unknown --mode: " + opts.mode);
    cfg.mode = *mode;
    cfg.num_queries = opts.num_queries;
    cfg.gen_temperature = opts.temperature;
    cfg.max_gen_tokens = opts.max_gen_tokens;
    cfg.top_logprobs = opts.top_logprobs;
    cfg.seed = opts.seed;
    cfg.parallelism = opts.parallelism;
    cfg.max_kept = opts.max_kept;
    auto space = entropy_space_from_string(opts.entropy_space);
    if (!space) throw CLI::ValidationError("--entropy-space must be labels or raw");
    cfg.entropy_space = *space;
    cfg.validate();

    auto questions = load_dataset(opts.dataset);
    PromptRegistry prompts =
        opts.prompt_dir.empty() ? PromptRegistry::builtin() : PromptRegistry::from_dir(opts.prompt_dir);
    auto llm = make_llm(opts.llm);
    auto search = make_search(opts, cfg);
    Backends backends{llm.get(), search.get()};

    if (opts.sweep.empty()) {
        RunReport report = run_dataset(questions, cfg, backends, prompts);
        auto path = write_report(report, opts.output, opts.traces);
        print_run_stats(report);
        std::printf("report written to %s\n", path.string().c_str());
        return kExitOk;
    }

    // Sweep over query counts. m=0 falls back to retrieval with the original
    // question; positive m keeps the requested mode.
    std::vector<RunReport> reports;
    for (int m : parse_sweep(opts.sweep)) {
        RunConfig sweep_cfg = cfg;
        if (m == 0 && (cfg.mode == Mode::SearchRag || cfg.mode == Mode::SearchRagUnfiltered)) {
            sweep_cfg.mode = Mode::QuestionOnlyRetrieval;
            sweep_cfg.num_queries = 0;
        } else {
            sweep_cfg.num_queries = m;
        }
        RunReport report = run_dataset(questions, sweep_cfg, backends, prompts);
        write_report(report, opts.output, opts.traces, "report_m" + std::to_string(m) + ".json");
        print_run_stats(report);
        reports.push_back(std::move(report));
    }
    Summary summary = emit_summary(reports, 0);
    std::printf("\n%s", summary.table_text.c_str());
    std::filesystem::create_directories(opts.output);
    std::ofstream out(std::filesystem::path(opts.output) / "summary.json");
    out << summary.to_json().dump(2) << '\n';
    return kExitOk;
}

int do_summarize(const std::vector<std::string>& files, const std::string& baseline) {
    std::vector<std::pair<std::string, double>> rows;
    for (const auto& file : files) {
        std::ifstream in(file);
        if (!in) throw BaselineMissing("cannot open report: " + file);
        nlohmann::json j = nlohmann::json::parse(in);
        std::string label = j.at("config").at("mode").get<std::string>();
        if (label == "searchrag" || label == "searchrag_unfiltered") {
            label += " m=" + std::to_string(j.at("config").at("num_queries").get<int>());
        }
        rows.emplace_back(label, j.at("aggregate").at("accuracy").get<double>() * 100.0);
    }
    size_t baseline_index = 0;
    if (!baseline.empty()) {
        bool found = false;
        for (size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].first == baseline || rows[i].first.rfind(baseline + " ", 0) == 0) {
                baseline_index = i;
                found = true;
                break;
            }
        }
        if (!found) throw BaselineMissing("no report matches baseline '" + baseline + "'");
    }
    Summary summary = emit_summary_rows(rows, baseline_index);
    std::printf("%s", summary.table_text.c_str());
    std::printf("%s\n", summary.to_json().dump(2).c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SearchRAG evaluation harness"};
    app.require_subcommand(1);

    RunOptions opts;
    auto* run = app.add_subcommand("run", "Run a dataset through the pipeline");
    run->add_option("--dataset", opts.dataset, "JSONL dataset path")->required();
    run->add_option("--mode", opts.mode,
                    "cot | question-only | searchrag | searchrag-unfiltered");
    run->add_option("--num-queries", opts.num_queries, "synthetic queries per question (m)");
    run->add_option("--temperature", opts.temperature, "query sampling temperature");
    run->add_option("--max-gen-tokens", opts.max_gen_tokens, "generation token cap");
    run->add_option("--top-logprobs", opts.top_logprobs, "top-k logprobs per probe");
    run->add_option("--seed", opts.seed, "run seed");
    run->add_option("--llm", opts.llm, "http | http:<config.json> | mock:<script.json>");
    run->add_option("--search", opts.search, "serper | cache | corpus");
    run->add_option("--cache-dir", opts.cache_dir, "search cache directory");
    run->add_option("--corpus", opts.corpus, "JSONL corpus path");
    run->add_option("--parallelism", opts.parallelism, "concurrent questions");
    run->add_option("--max-kept", opts.max_kept, "cap on kept snippets (<0 = unlimited)");
    run->add_option("--entropy-space", opts.entropy_space, "labels | raw");
    run->add_option("--prompt-dir", opts.prompt_dir, "prompt template override directory");
    run->add_option("--output,-o", opts.output, "output directory");
    run->add_flag("--traces", opts.traces, "write per-question traces");
    run->add_option("--sweep", opts.sweep, "e.g. num-queries=0,4,16,32");

    std::vector<std::string> summarize_files;
    std::string baseline;
    auto* summarize = app.add_subcommand("summarize", "Summarize report.json files");
    summarize->add_option("reports", summarize_files, "report.json files")->required();
    summarize->add_option("--baseline", baseline, "baseline row label (default: first report)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (run->parsed()) return do_run(opts);
        if (summarize->parsed()) return do_summarize(summarize_files, baseline);
        return kExitUsage;
    } catch (const QuotaError& e) {
        std::fprintf(stderr, "quota error: %s\n", e.what());
        return kExitQuota;
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
    } catch (const DatasetFormatError& e) {
        std::fprintf(stderr, "dataset error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFatal;
    }
}
