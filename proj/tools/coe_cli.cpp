// coe - build, optimize, evaluate, simulate and serve a Composition of
// Experts over precomputed embeddings and judge verdict records.

#include <algorithm>
#include <csignal>
#include <fstream>
#include <thread>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "coe/assignment.hpp"
#include "coe/corpus.hpp"
#include "coe/gateway.hpp"
#include "coe/pipeline.hpp"
#include "coe/router.hpp"
#include "coe/routing.hpp"
#include "coe/servesim.hpp"
#include "coe/winrate.hpp"

using nlohmann::json;

namespace {

volatile std::sig_atomic_t g_stop = 0;
void handle_signal(int) { g_stop = 1; }

coe::CategorySet category_set_from(const std::vector<std::string>& names,
                                   const std::vector<coe::PromptRecord>& prompts) {
    if (!names.empty()) return coe::CategorySet::from_names(names);
    // derive category order from first appearance in the prompt stream
    std::vector<std::string> derived;
    for (const auto& p : prompts) {
        if (!p.category) continue;
        if (std::find(derived.begin(), derived.end(), *p.category) == derived.end())
            derived.push_back(*p.category);
    }
    if (derived.empty())
        coe::fail(coe::ErrorCategory::validation,
                  "no categories given and no labeled prompts to derive them from");
    return coe::CategorySet::from_names(std::move(derived));
}

std::vector<coe::RoutingDecision> load_decisions(const std::filesystem::path& path,
                                                 const coe::CategorySet& categories,
                                                 const coe::ExpertCatalog& catalog) {
    std::ifstream in(path);
    if (!in) coe::fail(coe::ErrorCategory::io, "cannot open " + path.string());
    std::vector<coe::RoutingDecision> decisions;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            coe::fail(coe::ErrorCategory::format,
                      path.string() + ":" + std::to_string(lineno) + ": malformed decision");
        coe::RoutingDecision d;
        d.prompt_id = j.at("prompt_id").get<std::string>();
        auto category = categories.index_of(j.at("category").get<std::string>());
        if (!category)
            coe::fail(coe::ErrorCategory::validation,
                      path.string() + ":" + std::to_string(lineno) + ": unknown category");
        d.category = *category;
        d.entropy = j.at("entropy").get<double>();
        auto expert = catalog.index_of(j.at("expert").get<std::string>());
        if (!expert)
            coe::fail(coe::ErrorCategory::validation,
                      path.string() + ":" + std::to_string(lineno) + ": unknown expert");
        d.expert = *expert;
        d.expert_params_billions = catalog.at(*expert).params_billions;
        decisions.push_back(std::move(d));
    }
    return decisions;
}

int run_validate(const std::string& prompts_path, const std::string& embeddings_path,
                 const std::vector<std::string>& categories, const std::string& experts_path,
                 const std::string& judgments_path) {
    json report;
    std::vector<coe::PromptRecord> prompts;
    if (!categories.empty()) {
        prompts = coe::load_prompts(prompts_path, coe::CategorySet::from_names(categories));
    } else {
        prompts = coe::load_prompts(prompts_path);
    }
    report["prompts"] = prompts.size();
    std::size_t labeled = 0;
    for (const auto& p : prompts) labeled += p.category.has_value();
    report["labeled"] = labeled;

    if (!embeddings_path.empty()) {
        auto embeddings = coe::load_embeddings(embeddings_path);
        report["embeddings"] = embeddings.rows();
        report["dim"] = embeddings.dim();
        auto corpus = coe::join(prompts, embeddings);
        report["aligned"] = corpus.size();
        report["unmatched_prompts"] = corpus.unmatched_prompts;
        report["unmatched_embeddings"] = corpus.unmatched_embeddings;
    }
    if (!experts_path.empty()) {
        auto catalog = coe::load_catalog(experts_path);
        report["experts"] = catalog.size();
        if (!judgments_path.empty()) {
            auto judgments = coe::load_judgments(judgments_path);
            coe::validate_judgments(judgments, prompts, catalog);
            report["judgments"] = judgments.size();
        }
    }
    std::cout << report.dump(2) << '\n';
    return 0;
}

int run_train_router(const std::string& prompts_path, const std::string& embeddings_path,
                     const std::vector<std::string>& category_names, int k,
                     const std::string& distance_name, const std::vector<int>& sweep,
                     std::optional<double> epsilon, const std::string& out_dir) {
    auto prompts = coe::load_prompts(prompts_path);
    auto embeddings = coe::load_embeddings(embeddings_path);
    auto corpus = coe::join(prompts, embeddings);
    auto categories = category_set_from(category_names, corpus.prompts);
    if (epsilon) categories = categories.with_general();
    const auto distance = coe::parse_distance(distance_name);

    auto train = coe::filter_split(corpus, coe::Split::train);
    auto val = coe::filter_split(corpus, coe::Split::val);
    auto test = coe::filter_split(corpus, coe::Split::test);

    json report;
    int chosen_k = k;
    if (!sweep.empty()) {
        auto per_k = coe::sweep_k(train, val, sweep, distance, categories);
        json sweep_report;
        double best_val = -1.0;
        for (const auto& [kk, acc] : per_k) {
            sweep_report[std::to_string(kk)] = {{"train", acc.first}, {"val", acc.second}};
            if (acc.second > best_val) {
                best_val = acc.second;
                if (k <= 0) chosen_k = kk;
            }
        }
        report["per_k_accuracy"] = sweep_report;
    }
    if (chosen_k <= 0) chosen_k = 30;
    report["k"] = chosen_k;

    auto router = coe::KnnRouter::from_corpus(train, chosen_k, distance, categories);
    if (test.size() > 0) {
        auto eval = coe::evaluate(router, test);
        report["test_accuracy"] = eval.accuracy;
        report["confusion"] = eval.confusion;
    }
    coe::save_router(router, out_dir, epsilon);
    report["router_dir"] = out_dir;
    std::cout << report.dump(2) << '\n';
    return 0;
}

int run_label(const std::string& seed_prompts, const std::string& seed_embeddings,
              const std::string& unlabeled_prompts, const std::string& unlabeled_embeddings,
              const std::vector<std::string>& category_names, int k,
              const std::string& distance_name, double threshold, const std::string& out_path) {
    auto seed = coe::join(coe::load_prompts(seed_prompts), coe::load_embeddings(seed_embeddings));
    auto unlabeled = coe::join(coe::load_prompts(unlabeled_prompts),
                               coe::load_embeddings(unlabeled_embeddings));
    auto categories = category_set_from(category_names, seed.prompts);
    coe::PipelineConfig config{threshold, k, coe::parse_distance(distance_name)};
    auto outcome = coe::label_corpus(seed, categories, unlabeled, config);

    auto labeled = coe::apply_labels(outcome, unlabeled, categories);
    coe::save_prompts(labeled, out_path);

    json histogram;
    auto counts = coe::category_histogram(outcome, categories.size());
    for (std::size_t m = 0; m < categories.size(); ++m)
        histogram[categories.name_of(m)] = counts[m];
    json report{{"input", unlabeled.size()},
                {"accepted", outcome.accepted.size()},
                {"rejected", outcome.rejected.size()},
                {"acceptance_rate",
                 unlabeled.size() ? double(outcome.accepted.size()) / unlabeled.size() : 0.0},
                {"histogram", histogram},
                {"out", out_path}};
    std::cout << report.dump(2) << '\n';
    return 0;
}

int run_expand(const std::string& mode, const std::string& templates_path,
               const std::string& rows_path, const std::string& out_path) {
    auto templates = coe::load_templates(templates_path);
    std::ifstream in(rows_path);
    if (!in) coe::fail(coe::ErrorCategory::io, "cannot open " + rows_path);

    std::vector<coe::PromptRecord> prompts;
    std::string line;
    std::size_t lineno = 0;
    if (mode == "translation") {
        std::vector<coe::TranslationRow> rows;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded())
                coe::fail(coe::ErrorCategory::format,
                          rows_path + ":" + std::to_string(lineno) + ": malformed row");
            rows.push_back({j.at("query").get<std::string>(),
                            j.at("in_lang").get<std::string>(),
                            j.at("out_lang").get<std::string>()});
        }
        prompts = coe::expand_translation_templates(templates, rows);
    } else {
        std::vector<coe::CrossLingualRow> rows;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded())
                coe::fail(coe::ErrorCategory::format,
                          rows_path + ":" + std::to_string(lineno) + ": malformed row");
            rows.push_back({j.at("query").get<std::string>(), j.at("lang").get<std::string>()});
        }
        prompts = coe::expand_crosslingual_templates(templates, rows);
    }
    coe::save_prompts(prompts, out_path);
    std::cout << json{{"templates", templates.size()},
                      {"prompts", prompts.size()},
                      {"out", out_path}}
                     .dump(2)
              << '\n';
    return 0;
}

int run_winrate(const std::string& decisions_path, const std::string& judgments_path,
                const std::string& prompts_path, const std::vector<std::string>& category_names,
                const std::string& experts_path, const std::string& out_path,
                const std::string& best_expert_out) {
    auto catalog = coe::load_catalog(experts_path);
    auto prompts = coe::load_prompts(prompts_path);
    auto categories = category_set_from(category_names, prompts);
    auto decisions = load_decisions(decisions_path, categories, catalog);
    auto judgments = coe::load_judgments(judgments_path);

    std::vector<std::pair<std::string, std::size_t>> decided;
    for (const auto& d : decisions) decided.emplace_back(d.prompt_id, d.category);
    auto partition = coe::partition_by_category(decided, prompts, categories);
    auto build = coe::build_loss_matrix(partition, judgments, catalog, categories);
    coe::save_loss_matrix(build.matrix, out_path);

    if (!best_expert_out.empty()) {
        auto best = coe::best_expert_per_prompt(judgments, catalog);
        std::ofstream out(best_expert_out);
        if (!out) coe::fail(coe::ErrorCategory::io, "cannot write " + best_expert_out);
        for (const auto& [prompt_id, expert] : best)
            out << json{{"prompt_id", prompt_id}, {"best_expert", expert}}.dump() << '\n';
    }

    json missing = json::array();
    for (auto [i, j] : build.missing_cells)
        missing.push_back({{"category", categories.name_of(i)}, {"expert", catalog.at(j).name}});
    json report{{"categories", categories.names.size()},
                {"experts", catalog.size()},
                {"skipped_verdicts", build.skipped_verdicts},
                {"missing_cells", missing},
                {"out", out_path}};
    std::cout << report.dump(2) << '\n';
    return 0;
}

int run_solve(const std::string& loss_path, const std::string& experts_path,
              std::vector<double> budgets, const std::string& out_dir, bool export_lp_files) {
    auto matrix = coe::load_loss_matrix(loss_path);
    auto catalog = coe::load_catalog(experts_path);
    if (matrix.experts.size() != catalog.size())
        coe::fail(coe::ErrorCategory::validation,
                  "loss matrix expert count does not match the catalog");
    for (std::size_t j = 0; j < catalog.size(); ++j)
        if (matrix.experts[j] != catalog.at(j).name)
            coe::fail(coe::ErrorCategory::validation,
                      "loss matrix expert order does not match the catalog");
    std::sort(budgets.begin(), budgets.end());
    std::filesystem::create_directories(out_dir);

    auto entries = coe::budget_sweep(matrix.values, catalog.sizes_billions(), budgets);
    json report = json::array();
    for (const auto& entry : entries) {
        json item{{"budget", entry.budget}};
        std::string tag = std::to_string(entry.budget);
        tag.erase(tag.find_last_not_of('0') + 1);
        if (!tag.empty() && tag.back() == '.') tag.pop_back();
        if (entry.solution) {
            const auto& sol = *entry.solution;
            auto sol_path = std::filesystem::path(out_dir) / ("solution_" + tag + ".json");
            coe::save_solution(sol, matrix.categories, matrix.experts, sol_path);
            item["objective"] = sol.objective;
            json selected = json::array();
            for (std::size_t j : sol.selected_experts) selected.push_back(matrix.experts[j]);
            item["selected_experts"] = selected;
            item["solution"] = sol_path.string();
        } else {
            item["infeasible"] = true;
        }
        if (export_lp_files) {
            coe::MilpInstance instance{matrix.values, catalog.sizes_billions(), entry.budget};
            auto lp_path = std::filesystem::path(out_dir) / ("instance_" + tag + ".lp");
            coe::export_lp(coe::build_standard_form(instance), lp_path);
            item["lp"] = lp_path.string();
        }
        report.push_back(std::move(item));
    }
    std::cout << report.dump(2) << '\n';
    return 0;
}

int run_build_table(const std::string& router_dir, const std::string& experts_path,
                    const std::string& solution_path, std::optional<double> epsilon,
                    const std::string& out_path) {
    auto saved = coe::load_router(router_dir);
    auto catalog = coe::load_catalog(experts_path);

    std::ifstream in(solution_path);
    if (!in) coe::fail(coe::ErrorCategory::io, "cannot open " + solution_path);
    json sol_json = json::parse(in, nullptr, false);
    if (sol_json.is_discarded())
        coe::fail(coe::ErrorCategory::format, "malformed solution " + solution_path);

    const auto& categories = saved.router.categories();
    coe::AssignmentSolution solution;
    solution.y.assign(catalog.size(), 0);
    const auto& mapping = sol_json.at("category_to_expert");
    for (std::size_t i = 0; i < categories.size(); ++i) {
        const std::string& name = categories.name_of(i);
        if (!mapping.contains(name))
            coe::fail(coe::ErrorCategory::validation,
                      "solution does not cover category '" + name + "'");
        auto expert = catalog.index_of(mapping[name].get<std::string>());
        if (!expert)
            coe::fail(coe::ErrorCategory::validation,
                      "solution maps '" + name + "' to an unknown expert");
        solution.category_to_expert.push_back(*expert);
        solution.y[*expert] = 1;
    }
    for (std::size_t j = 0; j < catalog.size(); ++j)
        if (solution.y[j]) solution.selected_experts.push_back(j);

    if (!epsilon) epsilon = saved.epsilon_t;
    auto router = std::make_shared<const coe::KnnRouter>(std::move(saved.router));
    auto table = coe::build_routing_table(router, catalog, solution, epsilon);

    // stored references are resolved against the table's own directory
    auto table_dir = std::filesystem::absolute(out_path).parent_path();
    auto ref = [&table_dir](const std::string& p) {
        std::error_code ec;
        auto rel = std::filesystem::relative(std::filesystem::absolute(p), table_dir, ec);
        return ec || rel.empty() ? std::filesystem::absolute(p).string() : rel.string();
    };
    coe::save_routing_table(table, out_path, ref(router_dir), ref(experts_path));
    std::cout << json{{"table", out_path},
                      {"robust", epsilon.has_value()},
                      {"categories", categories.names.size()}}
                     .dump(2)
              << '\n';
    return 0;
}

int run_route(const std::string& table_path, const std::string& embeddings_path,
              const std::string& out_path) {
    auto table = coe::load_routing_table(table_path);
    auto embeddings = coe::load_embeddings(embeddings_path);
    std::vector<coe::RoutingDecision> decisions;
    decisions.reserve(embeddings.rows());
    for (std::size_t i = 0; i < embeddings.rows(); ++i)
        decisions.push_back(coe::route(table, embeddings.row(i), embeddings.ids()[i]));
    coe::save_decisions(decisions, table, out_path);
    json report{{"routed", decisions.size()}, {"out", out_path}};
    if (!decisions.empty())
        report["average_active_params_billions"] = coe::average_active_params(decisions);
    std::cout << report.dump(2) << '\n';
    return 0;
}

int run_evaluate(const std::string& decisions_path, const std::string& judgments_path,
                 const std::string& experts_path,
                 const std::vector<std::string>& category_names) {
    auto catalog = coe::load_catalog(experts_path);
    auto categories = coe::CategorySet::from_names(category_names);
    auto decisions = load_decisions(decisions_path, categories, catalog);
    auto judgments = coe::load_judgments(judgments_path);
    json report{{"decisions", decisions.size()},
                {"average_active_params_billions", coe::average_active_params(decisions)},
                {"win_rate", coe::evaluate_winrate(decisions, judgments, catalog)}};
    std::cout << report.dump(2) << '\n';
    return 0;
}

int run_simulate(const std::string& trace_path, const std::string& experts_path, double hbm_gib,
                 double bandwidth_gib, double compare_bandwidth_gib, double bytes_per_param,
                 const std::string& out_path, const std::string& csv_path) {
    auto catalog = coe::load_catalog(experts_path);
    auto trace = coe::load_trace(trace_path, catalog);
    coe::MemoryConfig config;
    config.hbm_capacity_bytes = static_cast<std::uint64_t>(hbm_gib * coe::kGiB);
    config.ddr_bandwidth_bytes_per_sec = coe::gib_per_sec(bandwidth_gib);
    config.bytes_per_param = bytes_per_param;
    config.per_token_latency_sec = coe::default_token_latencies(catalog);

    json report;
    if (compare_bandwidth_gib > 0) {
        auto slow = config;
        slow.ddr_bandwidth_bytes_per_sec = coe::gib_per_sec(compare_bandwidth_gib);
        auto cmp = coe::gpu_vs_tiered_report(trace, slow, config, catalog);
        report["tiered"] = {{"makespan", cmp.tiered.makespan},
                            {"copy_seconds", cmp.tiered.copy_seconds},
                            {"hit_rate", cmp.tiered.hbm_hit_rate}};
        report["gpu"] = {{"makespan", cmp.gpu.makespan},
                         {"copy_seconds", cmp.gpu.copy_seconds},
                         {"hit_rate", cmp.gpu.hbm_hit_rate}};
        report["makespan_ratio"] = cmp.makespan_ratio;
        report["copy_ratio"] = cmp.copy_ratio;
        if (!out_path.empty()) coe::save_report(cmp.tiered, catalog, out_path);
        if (!csv_path.empty()) coe::save_report_csv(cmp.tiered, csv_path);
    } else {
        auto sim = coe::simulate(trace, config, catalog);
        report = {{"requests", sim.per_request.size()},
                  {"makespan", sim.makespan},
                  {"copy_count", sim.copy_count},
                  {"copy_seconds", sim.copy_seconds},
                  {"tokens", sim.tokens},
                  {"hit_rate", sim.hbm_hit_rate}};
        if (!out_path.empty()) coe::save_report(sim, catalog, out_path);
        if (!csv_path.empty()) coe::save_report_csv(sim, csv_path);
    }
    std::cout << report.dump(2) << '\n';
    return 0;
}

int run_serve(const std::string& config_path, const std::string& table_path,
              const std::string& listen, int port,
              const std::vector<std::string>& upstream_pairs,
              const std::string& embedding_endpoint) {
    coe::GatewayConfig config;
    if (!config_path.empty()) {
        config = coe::load_gateway_config(config_path);
    } else {
        config.routing_table_path = table_path;
        config.listen_address = listen;
        config.port = port;
        if (!embedding_endpoint.empty()) config.embedding_endpoint = embedding_endpoint;
        for (const auto& pair : upstream_pairs) {
            auto eq = pair.find('=');
            if (eq == std::string::npos)
                coe::fail(coe::ErrorCategory::validation,
                          "--upstream expects expert=url, got '" + pair + "'");
            config.upstreams[pair.substr(0, eq)] = pair.substr(eq + 1);
        }
    }
    auto table = coe::load_routing_table(config.routing_table_path);
    coe::Gateway gateway(config, std::move(table));
    const int bound = gateway.start();
    std::cerr << "gateway listening on " << config.listen_address << ":" << bound << "\n";
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    gateway.stop();
    return 0;
}

int run_judge_collect(const std::string& prompts_path, const std::string& references_path,
                      const std::string& completions_path, const std::string& judge_url,
                      const std::string& out_path, int max_attempts) {
    auto prompts = coe::load_prompts(prompts_path);
    auto references = coe::load_references(references_path);
    auto completions = coe::load_completions(completions_path);
    coe::JudgeOptions options;
    options.max_attempts = max_attempts;
    auto result =
        coe::collect_judgments(prompts, references, completions, judge_url, out_path, options);
    json errors = json::array();
    for (const auto& e : result.errors)
        errors.push_back({{"prompt_id", e.prompt_id}, {"expert", e.expert}, {"message", e.message}});
    std::cout << json{{"records", result.records.size()},
                      {"resumed", result.resumed},
                      {"requested", result.requested},
                      {"errors", errors},
                      {"out", out_path}}
                     .dump(2)
              << '\n';
    return result.errors.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Composition of Experts toolkit"};
    app.require_subcommand(1);

    // validate
    std::string prompts_path, embeddings_path, experts_path, judgments_path;
    std::vector<std::string> categories;
    auto* validate = app.add_subcommand("validate", "Load and validate corpus files");
    validate->add_option("--prompts", prompts_path)->required();
    validate->add_option("--embeddings", embeddings_path);
    validate->add_option("--categories", categories)->delimiter(',');
    validate->add_option("--experts", experts_path);
    validate->add_option("--judgments", judgments_path);

    // train-router
    std::string tr_prompts, tr_embeddings, tr_out, tr_distance = "cosine";
    std::vector<std::string> tr_categories;
    std::vector<int> tr_sweep;
    int tr_k = 0;
    double tr_epsilon = -1;
    auto* train = app.add_subcommand("train-router", "Train the k-NN category router");
    train->add_option("--prompts", tr_prompts)->required();
    train->add_option("--embeddings", tr_embeddings)->required();
    train->add_option("--categories", tr_categories)->delimiter(',');
    train->add_option("--k", tr_k, "fixed k (0 = pick by val accuracy from --sweep)");
    train->add_option("--distance", tr_distance)->check(CLI::IsMember({"cosine", "euclidean"}));
    train->add_option("--sweep", tr_sweep, "candidate k values")->delimiter(',');
    train->add_option("--epsilon", tr_epsilon, "entropy threshold; enables the general category");
    train->add_option("--out", tr_out)->required();

    // label
    std::string lb_seed_prompts, lb_seed_emb, lb_unlabeled_prompts, lb_unlabeled_emb, lb_out;
    std::string lb_distance = "cosine";
    std::vector<std::string> lb_categories;
    int lb_k = 30;
    double lb_threshold = 0.5;
    auto* label = app.add_subcommand("label", "Label an unlabeled corpus with entropy filtering");
    label->add_option("--seed-prompts", lb_seed_prompts)->required();
    label->add_option("--seed-embeddings", lb_seed_emb)->required();
    label->add_option("--unlabeled-prompts", lb_unlabeled_prompts)->required();
    label->add_option("--unlabeled-embeddings", lb_unlabeled_emb)->required();
    label->add_option("--categories", lb_categories)->delimiter(',');
    label->add_option("--k", lb_k);
    label->add_option("--distance", lb_distance)->check(CLI::IsMember({"cosine", "euclidean"}));
    label->add_option("--threshold", lb_threshold, "entropy filter (strict)");
    label->add_option("--out", lb_out)->required();

    // expand
    std::string ex_mode, ex_templates, ex_rows, ex_out;
    auto* expand = app.add_subcommand("expand", "Expand prompt templates over rows");
    expand->add_option("--mode", ex_mode)
        ->required()
        ->check(CLI::IsMember({"translation", "crosslingual"}));
    expand->add_option("--templates", ex_templates)->required();
    expand->add_option("--rows", ex_rows)->required();
    expand->add_option("--out", ex_out)->required();

    // winrate
    std::string wr_decisions, wr_judgments, wr_prompts, wr_experts, wr_out, wr_best;
    std::vector<std::string> wr_categories;
    auto* winrate = app.add_subcommand("winrate", "Build the loss matrix from judge verdicts");
    winrate->add_option("--decisions", wr_decisions)->required();
    winrate->add_option("--judgments", wr_judgments)->required();
    winrate->add_option("--prompts", wr_prompts)->required();
    winrate->add_option("--categories", wr_categories)->delimiter(',');
    winrate->add_option("--experts", wr_experts)->required();
    winrate->add_option("--out", wr_out)->required();
    winrate->add_option("--best-expert-out", wr_best,
                        "also export the per-prompt best-expert map");

    // solve
    std::string sv_loss, sv_experts, sv_out;
    std::vector<double> sv_budgets;
    bool sv_lp = false;
    auto* solve = app.add_subcommand("solve", "Solve category-to-expert assignment per budget");
    solve->add_option("--loss", sv_loss)->required();
    solve->add_option("--experts", sv_experts)->required();
    solve->add_option("--budgets", sv_budgets)->required()->delimiter(',');
    solve->add_option("--out-dir", sv_out)->required();
    solve->add_flag("--lp", sv_lp, "export LP files for external solvers");

    // build-table
    std::string bt_router, bt_experts, bt_solution, bt_out;
    double bt_epsilon = -1;
    auto* build_table = app.add_subcommand("build-table", "Freeze a routing table");
    build_table->add_option("--router", bt_router)->required();
    build_table->add_option("--experts", bt_experts)->required();
    build_table->add_option("--solution", bt_solution)->required();
    build_table->add_option("--epsilon", bt_epsilon);
    build_table->add_option("--out", bt_out)->required();

    // route
    std::string rt_table, rt_embeddings, rt_out;
    auto* route_cmd = app.add_subcommand("route", "Batch-route embeddings through a table");
    route_cmd->add_option("--table", rt_table)->required();
    route_cmd->add_option("--embeddings", rt_embeddings)->required();
    route_cmd->add_option("--out", rt_out)->required();

    // evaluate
    std::string ev_decisions, ev_judgments, ev_experts;
    std::vector<std::string> ev_categories;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Offline win-rate and active parameters");
    evaluate_cmd->add_option("--decisions", ev_decisions)->required();
    evaluate_cmd->add_option("--judgments", ev_judgments)->required();
    evaluate_cmd->add_option("--experts", ev_experts)->required();
    evaluate_cmd->add_option("--categories", ev_categories)->required()->delimiter(',');

    // simulate
    std::string sm_trace, sm_experts, sm_out, sm_csv;
    double sm_hbm = 0, sm_bw = 800, sm_compare = 0, sm_bpp = 2;
    auto* simulate_cmd = app.add_subcommand("simulate", "Replay a trace on tiered memory");
    simulate_cmd->add_option("--trace", sm_trace)->required();
    simulate_cmd->add_option("--experts", sm_experts)->required();
    simulate_cmd->add_option("--hbm-gib", sm_hbm)->required();
    simulate_cmd->add_option("--bandwidth-gib", sm_bw);
    simulate_cmd->add_option("--compare-bandwidth-gib", sm_compare,
                             "also run at this bandwidth and report ratios");
    simulate_cmd->add_option("--bytes-per-param", sm_bpp);
    simulate_cmd->add_option("--out", sm_out);
    simulate_cmd->add_option("--csv", sm_csv);

    // serve
    std::string se_config, se_table, se_listen = "127.0.0.1", se_embed;
    std::vector<std::string> se_upstreams;
    int se_port = 8080;
    auto* serve = app.add_subcommand("serve", "Run the routing gateway");
    serve->add_option("--config", se_config);
    serve->add_option("--table", se_table);
    serve->add_option("--listen", se_listen);
    serve->add_option("--port", se_port);
    serve->add_option("--upstream", se_upstreams, "expert=url, repeatable");
    serve->add_option("--embedding-endpoint", se_embed);

    // judge-collect
    std::string jc_prompts, jc_references, jc_completions, jc_judge, jc_out;
    int jc_attempts = 3;
    auto* judge = app.add_subcommand("judge-collect", "Collect verdicts from a judge endpoint");
    judge->add_option("--prompts", jc_prompts)->required();
    judge->add_option("--references", jc_references)->required();
    judge->add_option("--completions", jc_completions)->required();
    judge->add_option("--judge", jc_judge)->required();
    judge->add_option("--out", jc_out)->required();
    judge->add_option("--max-attempts", jc_attempts);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate)
            return run_validate(prompts_path, embeddings_path, categories, experts_path,
                                judgments_path);
        if (*train)
            return run_train_router(tr_prompts, tr_embeddings, tr_categories, tr_k, tr_distance,
                                    tr_sweep,
                                    tr_epsilon >= 0 ? std::optional<double>(tr_epsilon)
                                                    : std::nullopt,
                                    tr_out);
        if (*label)
            return run_label(lb_seed_prompts, lb_seed_emb, lb_unlabeled_prompts, lb_unlabeled_emb,
                             lb_categories, lb_k, lb_distance, lb_threshold, lb_out);
        if (*expand) return run_expand(ex_mode, ex_templates, ex_rows, ex_out);
        if (*winrate)
            return run_winrate(wr_decisions, wr_judgments, wr_prompts, wr_categories, wr_experts,
                               wr_out, wr_best);
        if (*solve) return run_solve(sv_loss, sv_experts, sv_budgets, sv_out, sv_lp);
        if (*build_table)
            return run_build_table(bt_router, bt_experts, bt_solution,
                                   bt_epsilon >= 0 ? std::optional<double>(bt_epsilon)
                                                   : std::nullopt,
                                   bt_out);
        if (*route_cmd) return run_route(rt_table, rt_embeddings, rt_out);
        if (*evaluate_cmd) return run_evaluate(ev_decisions, ev_judgments, ev_experts, ev_categories);
        if (*simulate_cmd)
            return run_simulate(sm_trace, sm_experts, sm_hbm, sm_bw, sm_compare, sm_bpp, sm_out,
                                sm_csv);
        if (*serve)
            return run_serve(se_config, se_table, se_listen, se_port, se_upstreams, se_embed);
        if (*judge)
            return run_judge_collect(jc_prompts, jc_references, jc_completions, jc_judge, jc_out,
                                     jc_attempts);
    } catch (const coe::Error& e) {
        std::cerr << json{{"error",
                           {{"category", coe::to_string(e.category())}, {"message", e.what()}}}}
                         .dump()
                  << '\n';
        return coe::exit_code(e.category());
    } catch (const std::exception& e) {
        std::cerr << json{{"error", {{"category", "internal"}, {"message", e.what()}}}}.dump()
                  << '\n';
        return 1;
    }
    return 0;
}
