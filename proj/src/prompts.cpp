#include "searchrag/prompts.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "searchrag/errors.hpp"
#include "searchrag/util.hpp"

namespace searchrag {

namespace {

constexpr const char* kQueryGenSystem =
    "You are a medical expert. Generate focused search queries that will help determine the "
    "correct relationship between medical concepts. Your queries should:\n"
    "- Target the specific medical association being tested\n"
    "- Find evidence linking concepts in the question and options\n"
    "- Help differentiate between answer choices\n"
    "\n"
    "Given this medical question and its answer options, identify what specific general medical "
    "knowledge is needed to correctly answer the question. Generate one most relevant retrieval "
    "inquiry that is:\n"
    "- 3–8 words long\n"
    "- Focused on key medical terms\n"
    "- Formatted like search engine input\n"
    "- Targeting specific associations rather than general information\n"
    "\n"
    "Output your search query after 'Search_query:' and think step by step.";

constexpr const char* kQueryGenUser =
    "Question: {question}\n"
    "Possible Answers: {options}\n"
    "Please provide a single short query.";

constexpr const char* kProbeSystem =
    "You are a medical expert. Please pick the most likely option among A–D directly.";

constexpr const char* kProbeUserBare =
    "Question: {question}\n"
    "Answer Choices: {options}\n"
    "Answer:";

constexpr const char* kProbeUser =
    "Information: {snippets}\n"
    "Question: {question}\n"
    "Answer Choices: {options}\n"
    "Answer:";

constexpr const char* kFinalSystem = "You are a helpful medical expert.";

constexpr const char* kFinalUserBare =
    "Here is the question:\n"
    "{question}\n"
    "\n"
    "Possible Answers:\n"
    "{options}\n"
    "\n"
    "Output your final answer after 'answer_choice':";

constexpr const char* kFinalUser =
    "Below are some relevant excerpts:\n"
    "{snippets}\n"
    "\n"
    "Here is the question:\n"
    "{question}\n"
    "\n"
    "Possible Answers:\n"
    "{options}\n"
    "\n"
    "Output your final answer after 'answer_choice':";

struct Values {
    const std::string* question = nullptr;
    const std::string* options = nullptr;
    const std::string* snippets = nullptr;
};

// Single-pass placeholder substitution; substituted values are never
// rescanned, so braces inside question text survive verbatim.
std::string substitute(const std::string& tmpl, const Values& vals) {
    std::string out;
    out.reserve(tmpl.size() + 256);
    size_t i = 0;
    auto try_placeholder = [&](std::string_view name, const std::string* value) {
        if (tmpl.compare(i, name.size(), name) != 0) return false;
        if (!value) throw TemplateError("no value for placeholder " + std::string(name));
        out += *value;
        i += name.size();
        return true;
    };
    while (i < tmpl.size()) {
        if (tmpl[i] == '{' &&
            (try_placeholder("{question}", vals.question) ||
             try_placeholder("{options}", vals.options) ||
             try_placeholder("{snippets}", vals.snippets))) {
            continue;
        }
        out.push_back(tmpl[i]);
        ++i;
    }
    return out;
}

void require_placeholder(const std::string& tmpl, std::string_view name, const char* which) {
    if (tmpl.find(name) == std::string::npos) {
        throw TemplateError(std::string(which) + " template missing " + std::string(name));
    }
}

std::optional<std::string> read_asset(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string s = buf.str();
    // Editors append a final newline; templates are newline-sensitive.
    if (!s.empty() && s.back() == '\n') s.pop_back();
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace

PromptRegistry::PromptRegistry(PromptTemplateSet set) : set_(std::move(set)) { validate(); }

PromptRegistry PromptRegistry::builtin() {
    PromptTemplateSet s;
    s.query_gen_system = kQueryGenSystem;
    s.query_gen_user = kQueryGenUser;
    s.probe_system = kProbeSystem;
    s.probe_user = kProbeUser;
    s.probe_user_bare = kProbeUserBare;
    s.final_system = kFinalSystem;
    s.final_user = kFinalUser;
    s.final_user_bare = kFinalUserBare;
    return PromptRegistry(std::move(s));
}

PromptRegistry PromptRegistry::from_dir(const std::filesystem::path& dir) {
    PromptTemplateSet s = builtin().set_;
    auto load = [&](const char* file, std::string& slot) {
        if (auto text = read_asset(dir / file)) slot = std::move(*text);
    };
    load("query_gen.system.txt", s.query_gen_system);
    load("query_gen.user.txt", s.query_gen_user);
    load("uncertainty_probe.system.txt", s.probe_system);
    load("uncertainty_probe.user.txt", s.probe_user);
    load("uncertainty_probe.user_bare.txt", s.probe_user_bare);
    load("final_answer.system.txt", s.final_system);
    load("final_answer.user.txt", s.final_user);
    load("final_answer.user_bare.txt", s.final_user_bare);
    return PromptRegistry(std::move(s));
}

void PromptRegistry::validate() const {
    require_placeholder(set_.query_gen_user, "{question}", "query_gen.user");
    require_placeholder(set_.query_gen_user, "{options}", "query_gen.user");
    require_placeholder(set_.probe_user_bare, "{question}", "uncertainty_probe.user_bare");
    require_placeholder(set_.probe_user_bare, "{options}", "uncertainty_probe.user_bare");
    require_placeholder(set_.probe_user, "{snippets}", "uncertainty_probe.user");
    require_placeholder(set_.final_user_bare, "{question}", "final_answer.user_bare");
    require_placeholder(set_.final_user_bare, "{options}", "final_answer.user_bare");
    require_placeholder(set_.final_user, "{snippets}", "final_answer.user");
    // Evidence must be a pure prefix: the augmented templates end with the
    // bare ones, so a snippet changes nothing but the injected block.
    if (!set_.probe_user.ends_with(set_.probe_user_bare)) {
        throw TemplateError("uncertainty_probe.user must end with uncertainty_probe.user_bare");
    }
    if (!set_.final_user.ends_with(set_.final_user_bare)) {
        throw TemplateError("final_answer.user must end with final_answer.user_bare");
    }
}

std::string format_options_line(const Question& q) {
    std::string line;
    for (size_t i = 0; i < q.options.size(); ++i) {
        if (i > 0) line.push_back(' ');
        line.push_back(to_char(static_cast<OptionLabel>(i)));
        line += ") ";
        line += q.options[i];
    }
    return line;
}

RenderedPrompt PromptRegistry::render_query_gen(const Question& q) const {
    q.validate();
    std::string options = format_options_line(q);
    Values v;
    v.question = &q.stem;
    v.options = &options;
    return {set_.query_gen_system, substitute(set_.query_gen_user, v)};
}

RenderedPrompt PromptRegistry::render_uncertainty_probe(const Question& q,
                                                        const Snippet* snippet) const {
    q.validate();
    std::string options = format_options_line(q);
    Values v;
    v.question = &q.stem;
    v.options = &options;
    if (snippet == nullptr) {
        return {set_.probe_system, substitute(set_.probe_user_bare, v)};
    }
    v.snippets = &snippet->body;
    return {set_.probe_system, substitute(set_.probe_user, v)};
}

RenderedPrompt PromptRegistry::render_final(const Question& q,
                                            const SelectedKnowledge& knowledge) const {
    q.validate();
    std::string options = format_options_line(q);
    Values v;
    v.question = &q.stem;
    v.options = &options;
    if (knowledge.empty()) {
        return {set_.final_system, substitute(set_.final_user_bare, v)};
    }
    v.snippets = &knowledge.rendered;
    return {set_.final_system, substitute(set_.final_user, v)};
}

std::optional<std::string> parse_query(const std::string& generation) {
    static const std::string kMarker = "search_query:";
    std::string lower = to_lower(generation);
    size_t pos = lower.rfind(kMarker);
    if (pos == std::string::npos) return std::nullopt;
    size_t start = pos + kMarker.size();
    size_t eol = generation.find('\n', start);
    std::string text = trim(generation.substr(start, eol == std::string::npos ? std::string::npos
                                                                              : eol - start));
    if (text.size() >= 2) {
        char a = text.front();
        char b = text.back();
        if ((a == '"' && b == '"') || (a == '\'' && b == '\'')) {
            text = trim(text.substr(1, text.size() - 2));
        }
    }
    if (text.empty()) return std::nullopt;
    return text;
}

namespace {

bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::optional<OptionLabel> parse_answer(const std::string& generation, const Question& q) {
    static const std::string kMarker = "answer_choice";
    std::string lower = to_lower(generation);
    size_t pos = lower.rfind(kMarker);
    if (pos != std::string::npos) {
        for (size_t i = pos + kMarker.size(); i < generation.size(); ++i) {
            auto label = option_from_char(generation[i]);
            if (!label || !q.has_label(*label)) continue;
            bool prev_ok = i == 0 || !is_alnum(generation[i - 1]);
            bool next_ok = i + 1 >= generation.size() || !is_alnum(generation[i + 1]);
            if (prev_ok && next_ok) return *label;
        }
    }
    // Fallback: the last punctuation-anchored uppercase label anywhere.
    std::optional<OptionLabel> last;
    for (size_t i = 0; i < generation.size(); ++i) {
        char c = generation[i];
        if (c < 'A' || c > 'D') continue;
        auto label = option_from_char(c);
        if (!label || !q.has_label(*label)) continue;
        bool prev_ok = i == 0 || !is_alnum(generation[i - 1]);
        char next = i + 1 < generation.size() ? generation[i + 1] : '\0';
        if (prev_ok && (next == '.' || next == ')' || next == ':')) last = *label;
    }
    return last;
}

}  // namespace searchrag
