#include "aita/orchestrator.hpp"

#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "aita/errors.hpp"
#include "aita/text.hpp"

namespace aita {

using nlohmann::json;

namespace {

constexpr const char* kBuiltinTemplate = R"(You are the teaching assistant for a university course. You help students learn the course material, using the excerpts listed under COURSE MATERIALS.

{directives}

Grounding and citations:
- Base answers on the course materials. When they do not cover a question, say so plainly and point the student to where they might look instead of guessing.
- Cite each source you rely on in the exact form [source: <path> | unit <n>], copying the path and unit number from the SOURCE line of the excerpt. Never cite anything that is not listed below.
- Decline to predict assessment questions; offer study guidance instead.

Time awareness:
The current date and time is {current_datetime}. Use it for questions about deadlines, schedules and anything else that depends on today's date, and say explicitly whether an event is past or upcoming.

COURSE MATERIALS:
{context}

EARLIER IN THIS CONVERSATION:
{history}

CURRENT QUESTION:
{question}
)";

constexpr const char* kBuiltinDirectives = R"(Teaching approach:
- Build the student's understanding instead of handing over final answers; lead them through problems one step at a time.
- Find out what the student needs by asking a short follow-up question, for instance whether they want the mathematics or how it is used in practice.
- Use worked examples where they make an idea clearer.
- Keep the conversation connected: refer back to earlier exchanges, and when a question builds on a previous one, briefly recap the key points before moving on.
- Format answers in Markdown, mathematics in LaTeX between $...$ or $$...$$, and code in fenced code blocks.)";

constexpr std::string_view kPlaceholders[] = {"{context}", "{history}", "{question}", "{current_datetime}"};
constexpr std::string_view kDirectivesPlaceholder = "{directives}";

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Substitutes every placeholder in a single scan so substituted text is never
// itself scanned for placeholders.
std::string substitute(std::string_view tmpl, const std::vector<std::pair<std::string_view, std::string_view>>& values) {
    std::string out;
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        bool replaced = false;
        if (tmpl[pos] == '{') {
            for (const auto& [key, value] : values) {
                if (tmpl.substr(pos, key.size()) == key) {
                    out.append(value);
                    pos += key.size();
                    replaced = true;
                    break;
                }
            }
        }
        if (!replaced) out.push_back(tmpl[pos++]);
    }
    return out;
}

std::string_view or_none(const std::string& s) {
    return s.empty() ? kNoneSentinel : std::string_view(s);
}

}  // namespace

// ---------------------------------------------------------------------------
// Rewrite rules

void validate_rules(std::span<const SafetyRewriteRule> rules) {
    for (std::size_t i = 0; i < rules.size(); ++i) {
        if (rules[i].pattern.empty()) throw ConfigError("rewrite rule " + std::to_string(i) + " has an empty pattern");
    }
    for (std::size_t i = 0; i < rules.size(); ++i) {
        for (std::size_t j = 0; j < rules.size(); ++j) {
            if (text::ifind(rules[i].replacement, rules[j].pattern) != std::string_view::npos) {
                throw ConfigError("replacement of rewrite rule " + std::to_string(i) + " contains the pattern '" +
                                  rules[j].pattern + "'");
            }
        }
    }
}

std::vector<SafetyRewriteRule> rules_from_json(const json& j) {
    if (!j.is_array()) throw ConfigError("rewrite rules must be a JSON array");
    std::vector<SafetyRewriteRule> rules;
    for (const auto& row : j) {
        try {
            rules.push_back({row.at("pattern").get<std::string>(), row.at("replacement").get<std::string>()});
        } catch (const json::exception& e) {
            throw ConfigError(std::string("malformed rewrite rule: ") + e.what());
        }
    }
    validate_rules(rules);
    return rules;
}

std::vector<SafetyRewriteRule> load_rewrite_rules(const std::filesystem::path& path) {
    const json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw ConfigError(path.string() + " is not valid JSON");
    return rules_from_json(j);
}

RewriteOutcome apply_rewrite_rules(std::string_view query, std::span<const SafetyRewriteRule> rules) {
    RewriteOutcome out{std::string(query), {}};
    for (std::size_t i = 0; i < rules.size(); ++i) {
        const auto& rule = rules[i];
        if (rule.pattern.empty()) continue;
        std::string next;
        std::size_t pos = 0;
        bool hit = false;
        for (auto found = text::ifind(out.sanitized, rule.pattern, 0); found != std::string_view::npos;
             found = text::ifind(out.sanitized, rule.pattern, pos)) {
            next.append(out.sanitized, pos, found - pos);
            next.append(rule.replacement);
            pos = found + rule.pattern.size();
            hit = true;
        }
        if (hit) {
            next.append(out.sanitized, pos, std::string::npos);
            out.sanitized = std::move(next);
            out.applied.push_back(i);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Template

PromptTemplate::PromptTemplate(std::string template_text, std::string directives)
    : text_(std::move(template_text)), directives_(std::move(directives)) {
    for (const auto p : kPlaceholders) {
        const auto n = text::count_occurrences(text_, p);
        if (n != 1) {
            throw ConfigError("prompt template must contain " + std::string(p) + " exactly once (found " +
                              std::to_string(n) + ")");
        }
    }
    if (text::count_occurrences(text_, kDirectivesPlaceholder) > 1) {
        throw ConfigError("prompt template contains {directives} more than once");
    }
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& template_path) {
    return PromptTemplate(read_file(template_path));
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& template_path,
                                    const std::filesystem::path& directives_path) {
    return PromptTemplate(read_file(template_path), std::string(text::trim(read_file(directives_path))));
}

PromptTemplate PromptTemplate::builtin() {
    return PromptTemplate(kBuiltinTemplate);
}

std::string PromptTemplate::default_directives() {
    return kBuiltinDirectives;
}

std::string PromptTemplate::render(std::string_view context, std::string_view history, std::string_view question,
                                   std::string_view current_datetime) const {
    return substitute(text_, {{"{context}", context},
                              {"{history}", history},
                              {"{question}", question},
                              {"{current_datetime}", current_datetime},
                              {kDirectivesPlaceholder, directives_}});
}

// ---------------------------------------------------------------------------
// Turns

json to_json(const Citation& c) {
    return {{"source_path", c.source_path}, {"unit_number", c.unit_number}, {"chunk_id", c.chunk_id}};
}

Citation citation_from_json(const json& j) {
    return {j.at("source_path").get<std::string>(), j.at("unit_number").get<int>(),
            j.value("chunk_id", std::string{})};
}

json citations_to_json(std::span<const Citation> citations) {
    json arr = json::array();
    for (const auto& c : citations) arr.push_back(to_json(c));
    return arr;
}

std::vector<Citation> citations_from_json(const json& j) {
    std::vector<Citation> out;
    for (const auto& row : j) out.push_back(citation_from_json(row));
    return out;
}

std::vector<ConversationTurn> window_history(std::span<const ConversationTurn> turns, std::size_t limit) {
    const std::size_t keep = std::min(limit, turns.size());
    return {turns.end() - static_cast<std::ptrdiff_t>(keep), turns.end()};
}

std::string render_context(std::span<const RetrievalResult> results) {
    std::string out;
    for (const auto& r : results) {
        if (!out.empty()) out += "\n\n";
        out += "SOURCE: " + r.chunk.source_path + " | unit " + std::to_string(r.chunk.unit_number) + " | id " +
               r.chunk.chunk_id + "\n";
        out += r.chunk.text;
    }
    return out;
}

std::string render_history(std::span<const ConversationTurn> history) {
    std::string out;
    for (const auto& t : history) {
        if (!out.empty()) out += "\n\n";
        out += "Student: " + t.sanitized_query + "\nAssistant: " + t.reply;
    }
    return out;
}

std::string render_datetime(TimePoint now) {
    return format_iso8601(now) + " (" + weekday_name(now) + ")";
}

ChatRequest assemble_prompt(const PromptTemplate& prompt_template, std::span<const RetrievalResult> results,
                            std::span<const ConversationTurn> history, std::string_view question, TimePoint now,
                            const ModelSettings& model) {
    const auto context = render_context(results);
    const auto past = render_history(history);
    ChatRequest request;
    request.model_id = model.model_id;
    request.temperature = model.temperature;
    request.max_output_tokens = model.max_output_tokens;
    request.messages.push_back(
        {Role::system, prompt_template.render(or_none(context), or_none(past), question, render_datetime(now))});
    request.messages.push_back({Role::user, std::string(question)});
    return request;
}

CitationCheck validate_citations(std::string_view reply, std::span<const RetrievalResult> results) {
    static const std::regex marker(R"(\[\s*source\s*:\s*([^\]\|\n]+?)\s*\|\s*unit\s+(\d+)\s*\])", std::regex::icase);

    CitationCheck check;
    const std::string input(reply);
    std::set<std::pair<std::string, int>> seen;
    std::size_t last = 0;
    for (auto it = std::sregex_iterator(input.begin(), input.end(), marker); it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        const auto start = static_cast<std::size_t>(m.position(0));
        const auto end = start + static_cast<std::size_t>(m.length(0));
        const std::string path = m[1].str();
        int unit = 0;
        try {
            unit = std::stoi(m[2].str());
        } catch (const std::exception&) {
            unit = -1;  // out of range: cannot match anything
        }

        const RetrievalResult* match = nullptr;
        for (const auto& r : results) {
            if (r.chunk.source_path == path && r.chunk.unit_number == unit) {
                match = &r;
                break;
            }
        }

        if (match != nullptr) {
            check.clean_reply.append(input, last, end - last);
            if (seen.emplace(path, unit).second) {
                check.citations.push_back({path, unit, match->chunk.chunk_id});
            }
        } else {
            ++check.violations;
            std::size_t cut = start;
            // Drop one separating space so "text [source: x]." becomes "text."
            if (cut > last && input[cut - 1] == ' ') --cut;
            check.clean_reply.append(input, last, cut - last);
        }
        last = end;
    }
    check.clean_reply.append(input, last, std::string::npos);
    return check;
}

bool is_grounded(std::span<const Citation> citations, std::span<const RetrievalResult> results) {
    for (const auto& c : citations) {
        bool found = false;
        for (const auto& r : results) {
            if (r.chunk.chunk_id == c.chunk_id) {
                found = true;
                break;
            }
        }
        if (!found) return false;
    }
    return true;
}

TurnOutcome handle_turn(SessionState& session, std::string_view query, const IndexSnapshot& snapshot,
                        const PromptTemplate& prompt_template, std::span<const SafetyRewriteRule> rules,
                        Gateway& gateway, TimePoint now, const OrchestratorConfig& config) {
    if (config.history_limit == 0) throw ConfigError("history_limit must be at least 1");

    TurnOutcome out;
    auto rewrite = apply_rewrite_rules(query, rules);
    out.retrieval = retrieve(snapshot, rewrite.sanitized, gateway, config.retrieval);

    const auto history = window_history(session.turns, config.history_limit - 1);
    out.request = assemble_prompt(prompt_template, out.retrieval.results, history, rewrite.sanitized, now, config.model);

    auto& turn = out.turn;
    turn.turn_id = session.turns.empty() ? 1 : session.turns.back().turn_id + 1;
    turn.query = std::string(query);
    turn.sanitized_query = std::move(rewrite.sanitized);
    turn.timestamp = now;
    turn.degraded = out.retrieval.degraded;

    try {
        const auto response = gateway.chat(out.request);
        auto check = validate_citations(response.content, out.retrieval.results);
        turn.reply = std::move(check.clean_reply);
        turn.citations = std::move(check.citations);
        turn.violations = check.violations;
        turn.prompt_tokens = response.prompt_tokens;
        turn.completion_tokens = response.completion_tokens;
    } catch (const FilteredError&) {
        turn.reply = config.filtered_reply;
        turn.filtered = true;
    }

    out.log_record.timestamp = now;
    out.log_record.session_token_hash = hash_session_token(session.token);
    out.log_record.prompt_tokens = turn.prompt_tokens;
    out.log_record.completion_tokens = turn.completion_tokens;
    out.log_record.degraded = turn.degraded;
    out.log_record.violations = turn.violations;

    session.turns.push_back(turn);
    return out;
}

}  // namespace aita
