#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "searchrag/core_types.hpp"
#include "searchrag/pipeline.hpp"

namespace searchrag {

/// Loads a JSONL dataset: one {id, question, options:{A..}, answer?} per
/// line. Throws DatasetFormatError with the offending 1-based line number on
/// any malformed line or duplicate id.
std::vector<Question> load_dataset(const std::filesystem::path& path);

/// Stable report form written to report.json. Deterministic for identical
/// (dataset, config, mock/cache backends): no wall-clock content.
nlohmann::json report_to_json(const RunReport& report);

/// Full per-question trace (prompts, raw generations, snippet bodies,
/// latency). Written under traces/ when requested; not byte-stable.
nlohmann::json trace_to_json(const QuestionTrace& trace);

CallCounts total_calls(const RunReport& report);

/// Writes report.json (and traces/<qid>.json when with_traces) under out_dir.
std::filesystem::path write_report(const RunReport& report, const std::filesystem::path& out_dir,
                                   bool with_traces, const std::string& report_name = "report.json");

// ---------------------------------------------------------------------------
// Summary (accuracy + relative improvement vs. a baseline)
// ---------------------------------------------------------------------------

struct SummaryRow {
    std::string label;
    double accuracy_pct = 0.0;         // percent
    std::optional<double> improve_pct; // (acc - base) / base * 100; absent on the baseline row
};

struct Summary {
    std::vector<SummaryRow> rows;
    std::string table_text;
    nlohmann::json to_json() const;
};

std::string report_label(const RunReport& report);

/// Relative improvement of each report against reports[baseline_index]:
/// (accuracy - base) / base, rendered as a signed percentage. Throws
/// BaselineMissing when the index is out of range or base accuracy is zero.
Summary emit_summary(const std::vector<RunReport>& reports, size_t baseline_index = 0);

/// Same computation over bare (label, accuracy-percent) pairs.
Summary emit_summary_rows(const std::vector<std::pair<std::string, double>>& rows,
                          size_t baseline_index = 0);

}  // namespace searchrag
