#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "aita/gateway.hpp"
#include "aita/retrieval.hpp"
#include "aita/snapshot.hpp"
#include "aita/telemetry.hpp"
#include "aita/time_util.hpp"

namespace aita {

// ---------------------------------------------------------------------------
// Query preprocessing

/// Phrase substitution applied before a query reaches the model, used to dodge
/// content-filter false positives. Matching is ASCII case-insensitive.
struct SafetyRewriteRule {
    std::string pattern;
    std::string replacement;
};

/// Throws ConfigError for an empty pattern, or when any replacement contains
/// any pattern of the set (which would make rewriting non-idempotent).
void validate_rules(std::span<const SafetyRewriteRule> rules);

/// JSON array of {"pattern": ..., "replacement": ...}; validated.
std::vector<SafetyRewriteRule> rules_from_json(const nlohmann::json& j);
std::vector<SafetyRewriteRule> load_rewrite_rules(const std::filesystem::path& path);

struct RewriteOutcome {
    std::string sanitized;
    std::vector<std::size_t> applied;  // indices of rules that matched at least once
};

/// Rules in list order, each one a single left-to-right pass.
RewriteOutcome apply_rewrite_rules(std::string_view query, std::span<const SafetyRewriteRule> rules);

// ---------------------------------------------------------------------------
// Prompt template

/// System prompt with the placeholders {context}, {history}, {question} and
/// {current_datetime}, each exactly once, and optionally {directives} once.
class PromptTemplate {
public:
    explicit PromptTemplate(std::string template_text, std::string directives = default_directives());

    static PromptTemplate load(const std::filesystem::path& template_path);
    static PromptTemplate load(const std::filesystem::path& template_path, const std::filesystem::path& directives_path);
    static PromptTemplate builtin();

    static std::string default_directives();

    const std::string& template_text() const { return text_; }
    const std::string& directives() const { return directives_; }

    std::string render(std::string_view context, std::string_view history, std::string_view question,
                       std::string_view current_datetime) const;

private:
    std::string text_;
    std::string directives_;
};

// ---------------------------------------------------------------------------
// Conversation state

struct Citation {
    std::string source_path;
    int unit_number = 1;
    std::string chunk_id;

    bool operator==(const Citation&) const = default;
};

struct ConversationTurn {
    int turn_id = 0;
    std::string query;            // as typed by the student
    std::string sanitized_query;  // after rewrite rules; what the model saw
    std::string reply;
    std::vector<Citation> citations;
    TimePoint timestamp{};
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    bool degraded = false;
    bool filtered = false;
    int violations = 0;

    bool operator==(const ConversationTurn&) const = default;
};

nlohmann::json to_json(const Citation& c);
Citation citation_from_json(const nlohmann::json& j);
nlohmann::json citations_to_json(std::span<const Citation> citations);
std::vector<Citation> citations_from_json(const nlohmann::json& j);

/// The last min(limit, |turns|) turns, order preserved.
std::vector<ConversationTurn> window_history(std::span<const ConversationTurn> turns, std::size_t limit = 10);

// ---------------------------------------------------------------------------
// Prompt assembly and reply validation

struct ModelSettings {
    std::string model_id = "gpt-4o-mini";
    double temperature = 0.2;
    int max_output_tokens = 1024;
};

/// "SOURCE: <path> | unit <n> | id <chunk_id>" followed by the chunk text.
std::string render_context(std::span<const RetrievalResult> results);
std::string render_history(std::span<const ConversationTurn> history);
/// ISO-8601 UTC instant followed by the weekday, e.g. "2025-03-19T09:00:00Z (Wednesday)".
std::string render_datetime(TimePoint now);

inline constexpr std::string_view kNoneSentinel = "(none)";

/// System message = populated template; then one user message = question.
ChatRequest assemble_prompt(const PromptTemplate& prompt_template, std::span<const RetrievalResult> results,
                            std::span<const ConversationTurn> history, std::string_view question, TimePoint now,
                            const ModelSettings& model = {});

struct CitationCheck {
    std::string clean_reply;
    std::vector<Citation> citations;  // distinct, in order of first appearance
    int violations = 0;
};

/// Finds `[source: <path> | unit <n>]` markers. Markers naming a retrieved
/// (path, unit) become Citations; markers naming anything else are removed from
/// the text and counted. Malformed markers are left alone.
CitationCheck validate_citations(std::string_view reply, std::span<const RetrievalResult> results);

/// Every citation refers to a chunk in `results`.
bool is_grounded(std::span<const Citation> citations, std::span<const RetrievalResult> results);

// ---------------------------------------------------------------------------
// One student turn

struct SessionState {
    std::string token;
    std::vector<ConversationTurn> turns;
};

struct OrchestratorConfig {
    RetrievalOptions retrieval;
    /// Exchanges in the prompt, counting the one being asked.
    std::size_t history_limit = 10;
    ModelSettings model;
    std::string filtered_reply =
        "Sorry, I can't answer that as phrased because it was blocked by the content filter. "
        "Could you try rewording your question?";
};

struct TurnOutcome {
    ConversationTurn turn;
    QueryLogRecord log_record;
    ChatRequest request;  // what was sent to the model
    Retrieval retrieval;
};

/// rewrite → retrieve → assemble (with windowed history) → chat → validate
/// citations. Appends the turn to `session` and returns it with its log record.
/// A FilteredError from the model becomes an apology turn with no citations;
/// any other error propagates and leaves `session` untouched.
TurnOutcome handle_turn(SessionState& session, std::string_view query, const IndexSnapshot& snapshot,
                        const PromptTemplate& prompt_template, std::span<const SafetyRewriteRule> rules,
                        Gateway& gateway, TimePoint now, const OrchestratorConfig& config = {});

}  // namespace aita
