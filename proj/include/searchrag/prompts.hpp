#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "searchrag/core_types.hpp"

namespace searchrag {

struct RenderedPrompt {
    std::string system;
    std::string user;

    bool operator==(const RenderedPrompt&) const = default;
};

/// The full template text set. User templates carry {question}, {options}
/// and {snippets} placeholders; the *_bare variants are the no-knowledge
/// forms and must be suffixes of their with-knowledge counterparts so that
/// injected evidence is a pure prefix.
struct PromptTemplateSet {
    std::string query_gen_system;
    std::string query_gen_user;
    std::string probe_system;
    std::string probe_user;       // with "Information:" block
    std::string probe_user_bare;  // without
    std::string final_system;
    std::string final_user;       // with excerpts block
    std::string final_user_bare;  // without
};

class PromptRegistry {
public:
    static PromptRegistry builtin();

    /// Loads overrides from a directory of text assets (same file names the
    /// repo ships under prompts/). Missing files fall back to the builtin
    /// text. Throws TemplateError when the resulting set is structurally
    /// invalid.
    static PromptRegistry from_dir(const std::filesystem::path& dir);

    const PromptTemplateSet& templates() const { return set_; }

    RenderedPrompt render_query_gen(const Question& q) const;

    /// snippet == nullptr renders the bare probe (base-entropy case).
    RenderedPrompt render_uncertainty_probe(const Question& q, const Snippet* snippet) const;

    RenderedPrompt render_final(const Question& q, const SelectedKnowledge& knowledge) const;

private:
    explicit PromptRegistry(PromptTemplateSet set);
    void validate() const;

    PromptTemplateSet set_;
};

/// One option line: "A) text B) text ...".
std::string format_options_line(const Question& q);

/// Extracts the query after the last case-insensitive "search_query:" up to
/// end of line, trimmed of whitespace and one pair of surrounding quotes.
/// Empty result or missing marker -> nullopt (the sample is discarded but
/// still counts toward m).
std::optional<std::string> parse_query(const std::string& generation);

/// Primary rule: first standalone option letter after the last
/// case-insensitive "answer_choice". Fallback: last standalone
/// "A." / "A)" / "(A)" / "A:" style token anywhere. nullopt on failure;
/// the harness scores such questions incorrect.
std::optional<OptionLabel> parse_answer(const std::string& generation, const Question& q);

}  // namespace searchrag
