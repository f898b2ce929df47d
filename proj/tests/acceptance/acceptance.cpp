// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failures.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "aita/chat_service.hpp"
#include "aita/evaluation.hpp"
#include "aita/http_api.hpp"
#include "aita/ingest.hpp"
#include "aita/retrieval.hpp"
#include "aita/telemetry.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "synthetic_log.hpp"

using namespace aita;
using namespace aita::testing;
using nlohmann::json;

namespace {

struct CheckFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw CheckFailed(what);
}

void require_near(double got, double want, double tol, const std::string& what) {
    if (!(std::abs(got - want) <= tol)) {
        std::ostringstream msg;
        msg << what << ": got " << got << ", want " << want << " ± " << tol;
        throw CheckFailed(msg.str());
    }
}

int failures = 0;

/// Runs one criterion; `body` returns an optional note for the PASS line.
void criterion(const std::string& name, double limit_s, const std::function<std::string()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string note, error;
    try {
        note = body();
    } catch (const std::exception& e) {
        error = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (error.empty() && limit_s > 0 && secs >= limit_s) {
        error = "took " + std::to_string(secs) + " s, limit " + std::to_string(limit_s) + " s";
    }
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.3f s", secs);
    if (error.empty()) {
        std::cout << "PASS  " << name << "  (" << timing << (note.empty() ? "" : "; " + note) << ")\n";
    } else {
        ++failures;
        std::cout << "FAIL  " << name << "  (" << timing << "): " << error << "\n";
    }
}

std::shared_ptr<const IndexSnapshot> course_snapshot(std::size_t dim = 64) {
    auto gw = mock_gateway(std::make_shared<EchoChatBackend>(), dim);
    return ingest_corpus(load_corpus_dir(data_dir() / "corpus"), {}, *gw, at("2025-01-01T00:00:00Z"));
}

std::filesystem::path config_dir() {
    return std::filesystem::path(AITA_TEST_DATA_DIR) / "../../config";
}

// ---------------------------------------------------------------------------

std::string usage_arithmetic() {
    const SyntheticLogPlan plan;
    const auto log = synthetic_log(plan);
    const auto usage = usage_summary(log, plan.cohort);
    require(usage.total_queries == 1889, "total queries");
    require_near(usage.queries_per_student, 43.9, 0.05, "queries per student");

    const auto peak_day = busiest_date(log);
    require(peak_day.has_value(), "busiest date");
    const auto peak = peak_share(log, *peak_day);
    require(peak.day_queries == 724, "peak-day queries");
    require_near(100.0 * peak.share, 38.3, 0.05, "peak-day share (pp)");

    const auto window = window_share(log, *peak_day, std::chrono::hours(9), std::chrono::hours(12));
    require(window.window_queries == 564, "exam-window queries");
    require_near(100.0 * window.share, 78.0, 0.5, "exam-window share (pp)");

    const auto cost = cost_report(log, plan.fixed_cost, plan.prices);
    require_near(cost.token_cost, 6.23, 1e-9, "token cost");
    require_near(cost.per_query_cost, 0.45, 0.005, "cost per query");
    require_near(cost.token_per_query_cost, 0.003, 0.0005, "token cost per query");
    return format_one_decimal(usage.queries_per_student) + " q/student, " + format_percent(peak.share, 1) + ", " +
           format_percent(window.share) + ", " + std::to_string(cost.per_query_cost).substr(0, 6) + "/query";
}

std::string table_reproduction() {
    const auto rows = comparison_table(read_summary_csv((data_dir() / "table_ours.csv").string()),
                                       read_summary_csv((data_dir() / "table_theirs.csv").string()));
    const double dmu[] = {-4.8, 3.0, -3.5};
    const double dsd[] = {5.2, -5.3, 1.2};
    require(rows.size() == 3, "three rows");
    std::string note;
    for (std::size_t i = 0; i < 3; ++i) {
        require_near(rows[i].delta_mean, dmu[i], 0.05, rows[i].label + " delta mean");
        require_near(rows[i].delta_sd, dsd[i], 0.05, rows[i].label + " delta sd");
        note += (i ? ", " : "") + format_delta(rows[i].delta_mean) + "/" + format_delta(rows[i].delta_sd);
    }
    return note;
}

std::string permutation_oracle() {
    std::mt19937_64 rng(20250319);
    std::uniform_int_distribution<int> n_dist(2, 12), score(0, 20);
    for (int trial = 0; trial < 200; ++trial) {
        const auto n = static_cast<std::size_t>(n_dist(rng));
        PairedSamples s;
        for (std::size_t i = 0; i < n; ++i) {
            s.subject_ids.push_back(std::to_string(i));
            s.a.push_back(score(rng));
            s.b.push_back(score(rng));
        }
        PermutationOptions exhaustive;
        exhaustive.mode = PermutationMode::Exhaustive;
        PermutationOptions sampled;
        sampled.mode = PermutationMode::MonteCarloDistinct;
        sampled.n_resamples = std::uint64_t{1} << n;
        sampled.seed = rng();
        const auto e = paired_permutation_test(s, exhaustive);
        const auto m = paired_permutation_test(s, sampled);
        std::vector<double> d(n);
        for (std::size_t i = 0; i < n; ++i) d[i] = s.a[i] - s.b[i];
        require(e.p_value == m.p_value, "trial " + std::to_string(trial) + ": sampled and exhaustive p differ");
        require(e.p_value == enumerated_p(d), "trial " + std::to_string(trial) + ": p differs from enumeration");
    }
    PairedSamples fixture{{"x", "y", "z"}, {1, 2, 3}, {0, 0, 0}};
    require(paired_permutation_test(fixture).p_value == 0.25, "d=[1,2,3] p");
    PairedSamples same{{"x", "y", "z"}, {4, 5, 6}, {4, 5, 6}};
    require(paired_permutation_test(same).p_value == 1.0, "identical samples p");
    return "200 random samples";
}

std::string likert_conventions() {
    const auto s = likert_stats({5, 4, 4, std::nullopt});
    require_near(s.mean, 4.3333, 1e-3, "mean");
    require_near(s.sd, 0.4714, 1e-3, "sd");
    require(s.n == 3, "n");

    const char* survey = std::getenv("AITA_SURVEY_CSV");
    if (survey == nullptr || *survey == '\0') return "survey CSV not supplied (AITA_SURVEY_CSV); published-data check skipped";
    struct Expected {
        const char* column;
        double mean, sd;
        std::size_t n;
    };
    const Expected expected[] = {{"Q1", 4.22, 0.79, 36}, {"Q2", 4.19, 0.81, 36}, {"Q3", 4.44, 0.83, 36},
                                 {"Q4", 2.78, 1.08, 32}, {"Q5", 4.08, 0.86, 36}};
    const auto table = read_csv_file(survey);
    for (const auto& e : expected) {
        std::vector<LikertEntry> entries;
        for (const auto& cell : table.column_values(e.column)) entries.push_back(parse_likert(cell));
        const auto st = likert_stats(entries);
        require_near(st.mean, e.mean, 0.005, std::string(e.column) + " mean");
        require_near(st.sd, e.sd, 0.005, std::string(e.column) + " sd");
        require(st.n == e.n, std::string(e.column) + " n");
    }
    return "published survey CSV checked";
}

std::string retrieval_correctness() {
    auto gw = mock_gateway();
    MockEmbedder embedder(64);
    std::vector<std::shared_ptr<const IndexSnapshot>> corpora{course_snapshot()};
    std::mt19937 rng(11);
    const std::vector<std::string> words{"alpha", "matte", "key",   "spill", "track", "camera", "lens",
                                         "node",  "roto",  "over",  "plate", "grain", "blur",   "edge"};
    std::vector<std::string> texts;
    for (int i = 0; i < 50; ++i) {
        std::string t;
        for (std::size_t w = 0, len = 2 + rng() % 10; w < len; ++w) t += words[rng() % words.size()] + " ";
        texts.push_back(t + "item" + std::to_string(i));
    }
    corpora.push_back(snapshot_of_texts(texts));

    std::size_t queries = 0;
    for (const auto& s : corpora) {
        require(s->size() <= 50, "fixture corpus within 50 chunks");
        std::vector<std::string> qs;
        for (const auto& c : s->chunks()) qs.push_back(c.text);
        for (int i = 0; i < 10; ++i) qs.push_back(words[rng() % words.size()] + " " + words[rng() % words.size()]);
        for (const auto& q : qs) {
            ++queries;
            // Vector search against brute-force cosine.
            const auto qv = embedder.embed_one(q);
            std::vector<double> cos;
            for (std::size_t i = 0; i < s->size(); ++i) cos.push_back(cosine_oracle(s->vector(i), qv));
            const auto vs = vector_search(*s, qv, s->size());
            require(vs.size() == s->size(), "vector_search size");
            for (std::size_t r = 0; r < vs.size(); ++r) {
                require_near(vs[r].score, cos[vs[r].index], 1e-12, "cosine score");
                if (r > 0) require(vs[r - 1].score >= vs[r].score, "cosine order");
            }
            // Keyword search against hand-evaluated BM25.
            const auto bm = bm25_oracle(*s, q);
            const auto kw = keyword_scores(*s, q);
            for (std::size_t i = 0; i < s->size(); ++i) require_near(kw[i], bm[i], 1e-9, "BM25 score");
            const auto ks = keyword_search(*s, q, 10);
            const auto ko = rank_oracle(*s, bm, 10, true);
            require(ks.size() == ko.size(), "keyword_search size");
            for (std::size_t r = 0; r < ks.size(); ++r) require(ks[r].index == ko[r].index, "BM25 order");
            // RRF against 1/(60+rank) sums.
            const auto fused = fuse_rrf(*s, ks, vs, 60);
            std::map<std::uint32_t, double> rrf;
            for (std::size_t r = 0; r < ks.size(); ++r) rrf[ks[r].index] += 1.0 / (60.0 + static_cast<double>(r + 1));
            for (std::size_t r = 0; r < vs.size(); ++r) rrf[vs[r].index] += 1.0 / (60.0 + static_cast<double>(r + 1));
            require(fused.size() == rrf.size(), "fused size");
            for (const auto& f : fused) require_near(f.rrf_score, rrf[f.index], 1e-9, "RRF score");
        }
        // Self-retrieval.
        for (const auto& c : s->chunks()) {
            const auto r = retrieve(*s, c.text, *gw);
            require(!r.results.empty() && r.results.front().chunk.chunk_id == c.chunk_id,
                    "self-retrieval for " + c.source_path + " unit " + std::to_string(c.unit_number));
        }
    }
    require(RetrievalOptions{}.k == 10, "default k");
    require(retrieve(*corpora.back(), "matte key spill", *gw).results.size() == 10, "retrieve returns k=10 by default");
    return std::to_string(queries) + " queries over " + std::to_string(corpora.size()) + " corpora";
}

/// Cites the first retrieved source and one invented one.
std::string citing_reply(const ChatRequest& request) {
    static const std::regex source(R"(SOURCE: (.+?) \| unit (\d+) \|)");
    std::smatch m;
    const auto& sys = request.messages.front().content;
    if (!std::regex_search(sys, m, source)) return "No sources.";
    return "See [source: " + m[1].str() + " | unit " + m[2].str() + "] and [source: lectures/fake.pdf | unit 99].";
}

std::size_t occurrences(const std::string& s, const std::string& needle) {
    std::size_t n = 0;
    for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
    return n;
}

std::string orchestrator_contract() {
    const auto snapshot = course_snapshot();
    const auto rules = load_rewrite_rules(config_dir() / "rewrite_rules.json");
    std::vector<ChatRequest> prompts;
    auto gw = mock_gateway(std::make_shared<CallbackChatBackend>([&](const ChatRequest& r) {
        prompts.push_back(r);
        return citing_reply(r);
    }));
    auto store = std::make_shared<SqliteStore>(":memory:");
    ServiceConfig config;
    const auto now = at("2025-03-19T09:00:00Z");
    ChatService service(config, store, gw, PromptTemplate::builtin(), rules, snapshot, [&] { return now; });
    const auto token = service.create_session(true).token;

    // Rewrite: the model sees the sanitized text, the stored turn keeps the original.
    service.post_message(token, "How do I install Nuke");
    require(prompts.back().messages.back().content == "How do I set up the Nuke compositing software",
            "rewritten query reaches the model");
    const auto first = store->turns(token).front();
    require(first.query == "How do I install Nuke", "stored turn keeps the original query");
    require(first.sanitized_query == "How do I set up the Nuke compositing software", "stored sanitized query");

    for (int i = 2; i <= 11; ++i) service.post_message(token, "turn " + std::to_string(i) + " question");

    const auto stamp = render_datetime(now);
    for (const auto& p : prompts) require(occurrences(p.messages.front().content, stamp) == 1, "date injected once");

    // The 11th prompt holds turns 2..10 as history plus turn 11 as the question.
    const auto& eleventh = prompts.at(10).messages.front().content;
    require(occurrences(eleventh, "Student: ") == 9, "nine previous exchanges in the 11th prompt");
    require(eleventh.find("Student: How do I set up") == std::string::npos, "turn 1 left out of the 11th prompt");
    for (int i = 2; i <= 10; ++i) {
        require(eleventh.find("Student: turn " + std::to_string(i) + " question") != std::string::npos,
                "turn " + std::to_string(i) + " in the 11th prompt");
    }
    require(prompts.at(10).messages.back().content == "turn 11 question", "turn 11 is the question");

    // Grounding: one valid and one fabricated citation on every turn.
    const auto turns = store->turns(token);
    require(turns.size() == 11, "11 turns stored");
    std::set<std::string> ids;
    for (const auto& c : snapshot->chunks()) ids.insert(c.chunk_id);
    for (const auto& t : turns) {
        require(t.citations.size() == 1, "one citation on turn " + std::to_string(t.turn_id));
        require(t.violations == 1, "one violation on turn " + std::to_string(t.turn_id));
        require(ids.count(t.citations.front().chunk_id) == 1, "citation grounded in the snapshot");
        require(t.reply.find("fake.pdf") == std::string::npos, "fabricated marker removed");
    }
    return "11 turns";
}

std::string service_end_to_end() {
    TempDir dir;
    const auto db = (dir / "aita.db").string();
    const auto snapshot = course_snapshot();

    const auto start = [&](std::shared_ptr<ChatBackend> chat) {
        return std::make_unique<ChatService>(ServiceConfig{}, std::make_shared<SqliteStore>(db),
                                             mock_gateway(std::move(chat)), PromptTemplate::builtin(),
                                             std::vector<SafetyRewriteRule>{}, snapshot);
    };
    const auto post = [](httplib::Client& c, const std::string& path, const json& body,
                         const httplib::Headers& headers = {}) {
        auto r = c.Post(path, headers, body.dump(), "application/json");
        if (!r) throw CheckFailed("no HTTP response from " + path);
        return std::make_pair(r->status, json::parse(r->body));
    };

    std::string token;
    {
        auto service = start(std::make_shared<EchoChatBackend>());
        HttpApi api(*service, "");
        httplib::Client client("127.0.0.1", api.start("127.0.0.1", 0));
        require(post(client, "/api/session", {{"consent", false}}).first == 403, "session refused without consent");
        const auto [status, body] = post(client, "/api/session", {{"consent", true}});
        require(status == 200, "session created with consent");
        token = body.at("token");
        for (int i = 1; i <= 3; ++i) {
            const auto [s, reply] = post(client, "/api/chat", {{"token", token}, {"message", "message " + std::to_string(i)}});
            require(s == 200 && reply.at("turn_id") == i, "message " + std::to_string(i) + " answered");
        }
        api.stop();
    }

    // Restart on the same database.
    auto backend = std::make_shared<CallbackChatBackend>(citing_reply);
    auto service = start(backend);
    HttpApi api(*service, "admin-key");
    httplib::Client client("127.0.0.1", api.start("127.0.0.1", 0));
    auto hist = client.Get("/api/history?token=" + token);
    require(hist && hist->status == 200, "history after restart");
    const auto turns = json::parse(hist->body).at("turns");
    require(turns.size() == 3, "three turns after restart");
    for (int i = 0; i < 3; ++i) require(turns[i].at("query") == "message " + std::to_string(i + 1), "turn order");

    // Concurrent posts to one session.
    std::atomic<int> errors{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&] {
            httplib::Client c("127.0.0.1", api.port());
            for (int i = 0; i < 5; ++i) {
                auto r = c.Post("/api/chat", json{{"token", token}, {"message", "parallel"}}.dump(), "application/json");
                if (!r || r->status != 200) ++errors;
            }
        });
    }
    for (auto& t : threads) t.join();
    require(errors == 0, "concurrent posts succeeded");
    const auto all = service->get_history(token);
    require(all.size() == 23, "23 turns after concurrent posts");
    for (std::size_t i = 0; i < all.size(); ++i) require(all[i].turn_id == static_cast<int>(i + 1), "dense turn ids");

    // Hot swap mid-conversation, then retrieve the new material.
    const auto update = load_corpus_dir(data_dir() / "corpus_update");
    auto gw = mock_gateway();
    const auto next = update_corpus(*snapshot, update, {}, *gw, at("2025-02-01T00:00:00Z"));
    next->save(dir / "next.json");
    std::atomic<bool> stop{false};
    std::thread chatter([&] {
        httplib::Client c("127.0.0.1", api.port());
        while (!stop) {
            auto r = c.Post("/api/chat", json{{"token", token}, {"message", "keying"}}.dump(), "application/json");
            if (!r || r->status != 200) ++errors;
        }
    });
    const auto [swap_status, swap_body] =
        post(client, "/api/admin/snapshot", {{"path", (dir / "next.json").string()}}, {{"X-Admin-Key", "admin-key"}});
    stop = true;
    chatter.join();
    require(swap_status == 200, "admin swap accepted");
    require(swap_body.at("snapshot_hash") == next->content_hash(), "new snapshot served");
    require(errors == 0, "no errors across the swap");
    const auto [s, reply] = post(client, "/api/chat", {{"token", token}, {"message", "feathering a roto spline"}});
    require(s == 200, "post after swap");
    require(!reply.at("citations").empty() &&
                reply.at("citations")[0].at("source_path") == "slides/week04_rotoscoping.pdf",
            "new content retrievable after swap");
    api.stop();
    return std::to_string(service->get_history(token).size()) + " turns";
}

}  // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);
    criterion("usage and cost arithmetic on a synthetic term log", 1.0, usage_arithmetic);
    criterion("comparison table percentage differences", 0.0, table_reproduction);
    criterion("permutation test oracle", 10.0, permutation_oracle);
    criterion("Likert conventions", 0.0, likert_conventions);
    criterion("retrieval correctness", 0.0, retrieval_correctness);
    criterion("orchestrator contract", 0.0, orchestrator_contract);
    criterion("service end to end", 30.0, service_end_to_end);
    std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << "\n";
    return failures;
}
