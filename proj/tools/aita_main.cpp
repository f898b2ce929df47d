#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "aita/chat_service.hpp"
#include "aita/evaluation.hpp"
#include "aita/http_api.hpp"
#include "aita/ingest.hpp"
#include "aita/retrieval.hpp"
#include "aita/store.hpp"
#include "aita/telemetry.hpp"

namespace {

using namespace aita;

std::shared_ptr<Gateway> gateway_for(bool mock, std::size_t mock_dim, const std::string& config_path) {
    if (mock) return std::make_shared<Gateway>(std::make_shared<EchoChatBackend>(), std::make_shared<MockEmbedder>(mock_dim));
    if (config_path.empty()) throw ConfigError("pass --mock-embedder or --config with a gateway section");
    return make_gateway(ServiceConfig::load(config_path).gateway);
}

std::vector<QueryLogRecord> load_log(const std::string& path) {
    if (looks_like_sqlite(path)) return SqliteStore(path).query_log();
    return read_query_log_file(path);
}

void print_table(const std::vector<std::pair<std::string, std::string>>& rows) {
    std::size_t width = 0;
    for (const auto& [k, v] : rows) width = std::max(width, k.size());
    for (const auto& [k, v] : rows) std::cout << std::left << std::setw(static_cast<int>(width) + 2) << k << v << '\n';
}

std::string fixed(double x, int decimals) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(decimals) << x;
    return s.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"AI teaching assistant: corpus indexing, retrieval, chat service and study statistics"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Chunk and embed a corpus directory into a snapshot");
    std::string corpus_dir, out_path, config_path;
    ChunkPolicy policy;
    bool mock_embedder = false;
    std::size_t mock_dim = 1536;
    ingest->add_option("--corpus", corpus_dir, "Corpus directory")->required()->check(CLI::ExistingDirectory);
    ingest->add_option("--out", out_path, "Snapshot file to write")->required();
    ingest->add_option("--max-chars", policy.max_chars, "Chunk length in characters");
    ingest->add_option("--overlap", policy.overlap_chars, "Overlap between windows");
    ingest->add_flag("--mock-embedder", mock_embedder, "Offline hashed embeddings");
    ingest->add_option("--dim", mock_dim, "Mock embedding dimension");
    ingest->add_option("--config", config_path, "Service config whose gateway section embeds");

    // update
    auto* update = app.add_subcommand("update", "Replace or add documents in an existing snapshot");
    std::string snapshot_path, add_dir;
    update->add_option("--snapshot", snapshot_path, "Existing snapshot")->required()->check(CLI::ExistingFile);
    update->add_option("--add", add_dir, "Directory of new or changed documents")->required()->check(CLI::ExistingDirectory);
    update->add_option("--out", out_path, "Snapshot file to write")->required();
    update->add_option("--max-chars", policy.max_chars, "Chunk length in characters");
    update->add_option("--overlap", policy.overlap_chars, "Overlap between windows");
    update->add_flag("--mock-embedder", mock_embedder, "Offline hashed embeddings");
    update->add_option("--config", config_path, "Service config whose gateway section embeds");

    // query
    auto* query = app.add_subcommand("query", "Hybrid retrieval against a snapshot");
    std::string q;
    std::size_t k = 10;
    bool explain = false;
    query->add_option("--snapshot", snapshot_path, "Snapshot file")->required()->check(CLI::ExistingFile);
    query->add_option("--q", q, "Query text")->required();
    query->add_option("--k", k, "Results to return");
    query->add_flag("--mock-embedder", mock_embedder, "Offline hashed embeddings");
    query->add_flag("--explain", explain, "Print per-stage scores");
    query->add_option("--config", config_path, "Service config whose gateway section embeds");

    // serve
    auto* serve = app.add_subcommand("serve", "Run the chat service");
    int port = 0;
    serve->add_option("--config", config_path, "Service config")->required()->check(CLI::ExistingFile);
    serve->add_option("--snapshot", snapshot_path, "Snapshot file")->required()->check(CLI::ExistingFile);
    serve->add_option("--port", port, "Overrides the configured port");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "Usage and cost figures from the query log");
    analyze->require_subcommand(1);
    std::string log_path, date_str, tz_str = "+0", csv_out;
    std::int64_t cohort = 43;
    double fixed_cost = 0.0;
    std::string window_from, window_to;
    auto* usage = analyze->add_subcommand("usage", "Totals, per-student averages and daily counts");
    usage->add_option("--log", log_path, "JSON-lines log or service database")->required()->check(CLI::ExistingFile);
    usage->add_option("--cohort", cohort, "Number of enrolled students");
    usage->add_option("--tz", tz_str, "UTC offset in minutes or ±HH:MM");
    usage->add_option("--csv", csv_out, "Write daily counts as CSV");
    auto* peak = analyze->add_subcommand("peak", "Share of all queries falling on one day");
    peak->add_option("--log", log_path, "JSON-lines log or service database")->required()->check(CLI::ExistingFile);
    peak->add_option("--date", date_str, "YYYY-MM-DD (default: busiest day)");
    peak->add_option("--tz", tz_str, "UTC offset in minutes or ±HH:MM");
    peak->add_option("--from", window_from, "Window start HH:MM within the day");
    peak->add_option("--to", window_to, "Window end HH:MM within the day");
    auto* cost = analyze->add_subcommand("cost", "Fixed plus token cost per query");
    cost->add_option("--log", log_path, "JSON-lines log or service database")->required()->check(CLI::ExistingFile);
    cost->add_option("--fixed", fixed_cost, "Fixed infrastructure cost");
    cost->add_option("--config", config_path, "Price table JSON")->required()->check(CLI::ExistingFile);
    cost->add_option("--csv", csv_out, "Write the report as CSV");

    // eval
    auto* eval = app.add_subcommand("eval", "Study statistics");
    eval->require_subcommand(1);
    std::string csv_path, col_a, col_b, col, na_token = "N/A", ours_path, theirs_path;
    PermutationOptions perm;
    std::size_t comparisons = 1;
    auto* permtest = eval->add_subcommand("permtest", "Paired sign-flip permutation test");
    permtest->add_option("--csv", csv_path, "Scores CSV")->required()->check(CLI::ExistingFile);
    permtest->add_option("--col-a", col_a, "First score column")->required();
    permtest->add_option("--col-b", col_b, "Second score column")->required();
    permtest->add_option("--seed", perm.seed, "Resampling seed");
    permtest->add_option("--resamples", perm.n_resamples, "Monte-Carlo resamples");
    permtest->add_option("--max-exhaustive", perm.max_exhaustive_n, "Enumerate all flips up to this n");
    permtest->add_option("--comparisons", comparisons, "Bonferroni factor (1 = none)");
    auto* likert = eval->add_subcommand("likert", "Mean and population sd of a Likert column");
    likert->add_option("--csv", csv_path, "Survey CSV")->required()->check(CLI::ExistingFile);
    likert->add_option("--col", col, "Column")->required();
    likert->add_option("--na-token", na_token, "Cell value meaning N/A");
    auto* compare = eval->add_subcommand("compare", "Percentage differences between two summary tables");
    compare->add_option("--ours", ours_path, "label,mean,sd[,n] CSV")->required()->check(CLI::ExistingFile);
    compare->add_option("--theirs", theirs_path, "label,mean,sd[,n] CSV")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (*ingest) {
            auto gw = gateway_for(mock_embedder, mock_dim, config_path);
            const auto docs = load_corpus_dir(corpus_dir);
            const auto snap = ingest_corpus(docs, policy, *gw);
            snap->save(out_path);
            std::cout << "indexed " << docs.size() << " documents into " << snap->size() << " chunks; hash "
                      << snap->content_hash() << '\n';
        } else if (*update) {
            const auto base = IndexSnapshot::load(snapshot_path);
            auto gw = gateway_for(mock_embedder, base->embedding_dim(), config_path);
            const auto snap = update_corpus(*base, load_corpus_dir(add_dir), policy, *gw);
            snap->save(out_path);
            std::cout << "snapshot now has " << snap->size() << " chunks; hash " << snap->content_hash() << '\n';
        } else if (*query) {
            const auto snap = IndexSnapshot::load(snapshot_path);
            auto gw = gateway_for(mock_embedder, snap->embedding_dim() == 0 ? 1536 : snap->embedding_dim(), config_path);
            RetrievalOptions opts;
            opts.k = k;
            const auto r = retrieve(*snap, q, *gw, opts);
            if (r.degraded) std::cout << "(degraded: keyword-only)\n";
            for (const auto& res : r.results) {
                std::cout << res.final_rank << ". [" << res.chunk.source_path << " | unit " << res.chunk.unit_number
                          << "] " << res.chunk.chunk_id;
                if (explain) {
                    std::cout << "  bm25=" << fixed(res.keyword_score, 6) << " cos=" << fixed(res.vector_score, 6)
                              << " rrf=" << fixed(res.rrf_score, 6) << " rerank=" << fixed(res.rerank_score, 3)
                              << " final=" << fixed(res.fused_score, 6);
                }
                std::cout << '\n';
                if (explain) {
                    const auto& t = res.chunk.text;
                    std::cout << "    " << (t.size() > 160 ? t.substr(0, 160) + "..." : t) << '\n';
                }
            }
        } else if (*serve) {
            auto cfg = ServiceConfig::load(config_path);
            if (port != 0) cfg.port = port;
            auto service = make_service(cfg, snapshot_path);
            const char* key = std::getenv(cfg.admin_key_env.c_str());
            if (key == nullptr) spdlog::warn("{} is not set; the admin endpoint is disabled", cfg.admin_key_env);
            HttpApi api(*service, key ? key : "");
            api.listen(cfg.bind_address, cfg.port);
        } else if (*analyze) {
            const auto log = load_log(log_path);
            const int tz = parse_utc_offset(tz_str);
            if (*usage) {
                const auto s = usage_summary(log, cohort, tz);
                print_table({{"queries", std::to_string(s.total_queries)},
                             {"sessions", std::to_string(s.total_sessions)},
                             {"queries/session", fixed(s.queries_per_session, 2)},
                             {"queries/student", format_one_decimal(s.queries_per_student)},
                             {"days", std::to_string(s.span_days)}});
                if (!csv_out.empty()) {
                    std::ofstream out(csv_out);
                    out << "date,queries\n";
                    for (const auto& d : daily_counts(log, tz)) out << format_date(d.date) << ',' << d.count << '\n';
                }
            } else if (*peak) {
                Date date{};
                if (date_str.empty()) {
                    const auto busiest = busiest_date(log, tz);
                    if (!busiest) throw UndefinedValueError("the log is empty");
                    date = *busiest;
                } else {
                    date = parse_date(date_str);
                }
                const auto p = peak_share(log, date, tz);
                std::vector<std::pair<std::string, std::string>> rows{
                    {"date", format_date(date)},
                    {"day queries", std::to_string(p.day_queries)},
                    {"total queries", std::to_string(p.total_queries)},
                    {"share", fixed(100.0 * p.share, 1) + "%"}};
                if (!window_from.empty() && !window_to.empty()) {
                    auto hhmm = [](const std::string& s) {
                        const auto colon = s.find(':');
                        if (colon == std::string::npos) throw ParseError("expected HH:MM, got " + s);
                        return std::chrono::seconds(std::stoi(s.substr(0, colon)) * 3600 +
                                                    std::stoi(s.substr(colon + 1)) * 60);
                    };
                    const auto w = window_share(log, date, hhmm(window_from), hhmm(window_to), tz);
                    rows.push_back({"window queries", std::to_string(w.window_queries)});
                    rows.push_back({"window share", format_percent(w.share)});
                }
                print_table(rows);
            } else if (*cost) {
                std::ifstream in(config_path);
                const auto prices = PriceTable::from_json(nlohmann::json::parse(in));
                const auto c = cost_report(log, fixed_cost, prices);
                print_table({{"queries", std::to_string(c.queries)},
                             {"fixed cost", fixed(c.fixed_cost, 2)},
                             {"token cost", fixed(c.token_cost, 2)},
                             {"total cost", fixed(c.total_cost, 2)},
                             {"cost/query", fixed(c.per_query_cost, 3)},
                             {"token cost/query", fixed(c.token_per_query_cost, 4)}});
                if (!csv_out.empty()) {
                    std::ofstream out(csv_out);
                    out << "queries,fixed_cost,token_cost,total_cost,per_query_cost,token_per_query_cost\n"
                        << c.queries << ',' << c.fixed_cost << ',' << c.token_cost << ',' << c.total_cost << ','
                        << c.per_query_cost << ',' << c.token_per_query_cost << '\n';
                }
            }
        } else if (*eval) {
            if (*permtest) {
                const auto t = read_csv_file(csv_path);
                PairedSamples s;
                s.a = numeric_column(t, col_a);
                s.b = numeric_column(t, col_b);
                for (std::size_t i = 0; i < s.a.size(); ++i) s.subject_ids.push_back(std::to_string(i + 1));
                const auto r = paired_permutation_test(s, perm);
                std::vector<std::pair<std::string, std::string>> rows{
                    {"n", std::to_string(s.a.size())},
                    {"t", fixed(r.t_statistic, 4)},
                    {"p", fixed(r.p_value, 4)},
                    {"permutations", std::to_string(r.n_permutations_used) + (r.exhaustive ? " (exhaustive)" : " (sampled)")}};
                if (comparisons > 1) rows.push_back({"p (Bonferroni)", fixed(bonferroni(r.p_value, comparisons), 4)});
                print_table(rows);
            } else if (*likert) {
                const auto t = read_csv_file(csv_path);
                std::vector<LikertEntry> values;
                for (const auto& cell : t.column_values(col)) values.push_back(parse_likert(cell, na_token));
                const auto s = likert_stats(values);
                print_table({{"mean", fixed(s.mean, 2)}, {"sd", fixed(s.sd, 2)}, {"n", std::to_string(s.n)}});
            } else if (*compare) {
                std::cout << render_comparison_table(comparison_table(read_summary_csv(ours_path),
                                                                      read_summary_csv(theirs_path)));
            }
        }
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
