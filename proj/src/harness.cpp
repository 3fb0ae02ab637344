#include "searchrag/harness.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <unordered_set>

#include "searchrag/errors.hpp"
#include "searchrag/util.hpp"

namespace searchrag {

using nlohmann::json;

std::vector<Question> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DatasetFormatError(0, "cannot open dataset: " + path.string());
    std::vector<Question> questions;
    std::unordered_set<std::string> ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        Question q;
        try {
            q = json::parse(line).get<Question>();
        } catch (const std::exception& e) {
            throw DatasetFormatError(line_no, e.what());
        }
        if (!ids.insert(q.id).second) {
            throw DatasetFormatError(line_no, "duplicate question id: " + q.id);
        }
        questions.push_back(std::move(q));
    }
    if (questions.empty()) throw DatasetFormatError(line_no, "dataset is empty");
    return questions;
}

namespace {

json calls_to_json(const CallCounts& c) {
    return json{{"query_gen", c.query_gen},
                {"base_probe", c.base_probe},
                {"snippet_probe", c.snippet_probe},
                {"final_completion", c.final_completion},
                {"search", c.search}};
}

json question_report_entry(const QuestionTrace& t) {
    json queries = json::array();
    for (const auto& a : t.queries) {
        queries.push_back(json{{"sample_index", a.sample_index}, {"ok", a.ok}, {"text", a.text}});
    }
    std::unordered_set<int> kept_indices;
    for (const auto& k : t.selected.kept) kept_indices.insert(k.snippet.query.sample_index);
    json snippets = json::array();
    for (const auto& s : t.scored) {
        snippets.push_back(json{{"sample_index", s.snippet.query.sample_index},
                                {"post_entropy_bits", s.post_entropy_bits},
                                {"delta_h_bits", s.delta_h_bits},
                                {"probe_failed", s.probe_failed},
                                {"kept", kept_indices.count(s.snippet.query.sample_index) > 0}});
    }
    json kept = json::array();
    for (const auto& k : t.selected.kept) kept.push_back(k.snippet.query.sample_index);
    json entry{{"id", t.question_id},
               {"mode", to_string(t.mode)},
               {"num_queries", t.num_queries},
               {"base_entropy_bits", t.base_entropy ? json(t.base_entropy->bits) : json(nullptr)},
               {"queries", queries},
               {"snippets", snippets},
               {"kept_sample_indices", kept},
               {"max_kept_capped", t.max_kept_capped},
               {"final_raw", t.final_raw},
               {"parsed", t.parsed ? json(to_string(*t.parsed)) : json(nullptr)},
               {"correct", t.correct ? json(*t.correct) : json(nullptr)},
               {"calls", calls_to_json(t.calls)},
               {"errors", t.errors}};
    return entry;
}

std::string sanitize_filename(const std::string& id) {
    std::string out;
    for (char c : id) {
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c
                                                                                          : '_');
    }
    return out.empty() ? "question" : out;
}

}  // namespace

json report_to_json(const RunReport& report) {
    json questions = json::array();
    for (const auto& t : report.traces) questions.push_back(question_report_entry(t));
    return json{{"schema_version", RunReport::kSchemaVersion},
                {"config", report.config},
                {"aggregate",
                 json{{"n", report.n}, {"n_correct", report.n_correct}, {"accuracy", report.accuracy}}},
                {"questions", questions}};
}

json trace_to_json(const QuestionTrace& t) {
    json entry = question_report_entry(t);
    json queries = json::array();
    for (const auto& a : t.queries) {
        queries.push_back(json{{"sample_index", a.sample_index},
                               {"ok", a.ok},
                               {"text", a.text},
                               {"raw_generation", a.raw_generation}});
    }
    entry["queries"] = queries;
    if (t.base_entropy) entry["base_entropy_dist"] = t.base_entropy->effective_dist;
    json scored = json::array();
    for (const auto& s : t.scored) scored.push_back(s);
    entry["scored_snippets"] = scored;
    entry["selected"] = t.selected;
    entry["final_prompt"] = json{{"system", t.final_prompt.system}, {"user", t.final_prompt.user}};
    entry["latency_ms"] = t.latency_ms;
    return entry;
}

CallCounts total_calls(const RunReport& report) {
    CallCounts total;
    for (const auto& t : report.traces) {
        total.query_gen += t.calls.query_gen;
        total.base_probe += t.calls.base_probe;
        total.snippet_probe += t.calls.snippet_probe;
        total.final_completion += t.calls.final_completion;
        total.search += t.calls.search;
    }
    return total;
}

std::filesystem::path write_report(const RunReport& report, const std::filesystem::path& out_dir,
                                   bool with_traces, const std::string& report_name) {
    std::filesystem::create_directories(out_dir);
    auto report_path = out_dir / report_name;
    {
        std::ofstream out(report_path, std::ios::binary | std::ios::trunc);
        out << report_to_json(report).dump(2) << '\n';
    }
    if (with_traces) {
        auto traces_dir = out_dir / "traces";
        std::filesystem::create_directories(traces_dir);
        for (const auto& t : report.traces) {
            std::ofstream out(traces_dir / (sanitize_filename(t.question_id) + ".json"),
                              std::ios::binary | std::ios::trunc);
            out << trace_to_json(t).dump(2) << '\n';
        }
    }
    return report_path;
}

// ---------------------------------------------------------------------------
// Summary
// ---------------------------------------------------------------------------

std::string report_label(const RunReport& report) {
    std::string label = to_string(report.config.mode);
    if (report.config.mode == Mode::SearchRag || report.config.mode == Mode::SearchRagUnfiltered) {
        label += " m=" + std::to_string(report.config.num_queries);
    }
    return label;
}

json Summary::to_json() const {
    json rows_json = json::array();
    for (const auto& r : rows) {
        rows_json.push_back(json{{"label", r.label},
                                 {"accuracy_pct", r.accuracy_pct},
                                 {"improve_pct", r.improve_pct ? json(*r.improve_pct) : json(nullptr)}});
    }
    return json{{"rows", rows_json}};
}

Summary emit_summary_rows(const std::vector<std::pair<std::string, double>>& rows,
                          size_t baseline_index) {
    if (rows.empty()) throw BaselineMissing("no reports to summarize");
    if (baseline_index >= rows.size()) {
        throw BaselineMissing("baseline index " + std::to_string(baseline_index) +
                              " out of range");
    }
    double base = rows[baseline_index].second;
    if (base <= 0.0) {
        throw BaselineMissing("baseline accuracy is zero; relative improvement undefined");
    }
    Summary summary;
    size_t width = 8;
    for (const auto& [label, _] : rows) width = std::max(width, label.size());
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%-*s  %9s  %9s\n", static_cast<int>(width), "run",
                  "accuracy", "improve");
    summary.table_text += buf;
    for (size_t i = 0; i < rows.size(); ++i) {
        SummaryRow row;
        row.label = rows[i].first;
        row.accuracy_pct = rows[i].second;
        if (i != baseline_index) row.improve_pct = (rows[i].second - base) / base * 100.0;
        std::string improve = "-";
        if (row.improve_pct) {
            std::snprintf(buf, sizeof(buf), "%+.2f%%", *row.improve_pct);
            improve = buf;
        }
        std::snprintf(buf, sizeof(buf), "%-*s  %8.2f%%  %9s\n", static_cast<int>(width),
                      row.label.c_str(), row.accuracy_pct, improve.c_str());
        summary.table_text += buf;
        summary.rows.push_back(std::move(row));
    }
    return summary;
}

Summary emit_summary(const std::vector<RunReport>& reports, size_t baseline_index) {
    std::vector<std::pair<std::string, double>> rows;
    rows.reserve(reports.size());
    for (const auto& r : reports) rows.emplace_back(report_label(r), r.accuracy * 100.0);
    return emit_summary_rows(rows, baseline_index);
}

}  // namespace searchrag
