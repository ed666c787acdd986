#include "coe/routing.hpp"

#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

namespace coe {

using nlohmann::json;

RoutingTable build_routing_table(std::shared_ptr<const KnnRouter> router, ExpertCatalog catalog,
                                 const AssignmentSolution& solution,
                                 std::optional<double> epsilon_t) {
    if (!router) fail(ErrorCategory::validation, "routing table requires a router");
    if (solution.category_to_expert.size() != router->categories().size())
        fail(ErrorCategory::validation,
             "assignment covers " + std::to_string(solution.category_to_expert.size()) +
                 " categories but the router has " + std::to_string(router->categories().size()));
    RoutingTable table{solution.category_to_expert, epsilon_t, std::move(catalog),
                       std::move(router)};
    validate_routing_table(table);
    return table;
}

void validate_routing_table(const RoutingTable& table) {
    if (!table.router) fail(ErrorCategory::validation, "routing table has no router");
    const auto& categories = table.router->categories();
    if (table.category_to_expert.size() != categories.size())
        fail(ErrorCategory::validation, "routing table does not cover every category");
    for (std::size_t expert : table.category_to_expert)
        if (expert >= table.catalog.size())
            fail(ErrorCategory::validation, "routing table maps to unknown expert index " +
                                                std::to_string(expert));
    if (table.epsilon_t) {
        if (!categories.has_general())
            fail(ErrorCategory::validation, "robust table requires a 'general' category");
        if (*table.epsilon_t < 0) fail(ErrorCategory::validation, "epsilon_t must be >= 0");
    }
}

RoutingDecision route(const RoutingTable& table, std::span<const float> embedding,
                      std::string prompt_id) {
    CategoryPrediction pred = table.epsilon_t
                                  ? table.router->predict_robust(embedding, *table.epsilon_t)
                                  : table.router->predict(embedding);
    RoutingDecision decision;
    decision.prompt_id = std::move(prompt_id);
    decision.category = pred.predicted;
    decision.entropy = pred.entropy;
    decision.expert = table.category_to_expert[pred.predicted];
    decision.expert_params_billions = table.catalog.at(decision.expert).params_billions;
    return decision;
}

std::vector<RoutingDecision> route_conversation(const RoutingTable& table,
                                                const EmbeddingMatrix& turns) {
    if (turns.rows() == 0) fail(ErrorCategory::validation, "empty conversation");
    std::vector<RoutingDecision> decisions;
    decisions.reserve(turns.rows());
    for (std::size_t i = 0; i < turns.rows(); ++i)
        decisions.push_back(route(table, turns.row(i), turns.ids()[i]));
    return decisions;
}

double average_active_params(std::span<const RoutingDecision> decisions) {
    if (decisions.empty()) fail(ErrorCategory::validation, "no decisions to average");
    double total = 0.0;
    for (const auto& d : decisions) total += d.expert_params_billions;
    return total / static_cast<double>(decisions.size());
}

double aggregate_scores(std::span<const double> per_benchmark_scores) {
    if (per_benchmark_scores.empty()) fail(ErrorCategory::validation, "no scores to aggregate");
    double total = 0.0;
    for (double s : per_benchmark_scores) total += s;
    const double mean = total / static_cast<double>(per_benchmark_scores.size());
    return std::round(mean * 1000.0) / 1000.0;
}

double evaluate_winrate(std::span<const RoutingDecision> decisions,
                        std::span<const JudgmentRecord> judgments, const ExpertCatalog& catalog) {
    if (decisions.empty()) fail(ErrorCategory::validation, "no decisions to evaluate");
    std::unordered_map<std::string, Verdict> verdicts;  // "prompt\texpert" -> verdict
    for (const auto& j : judgments) verdicts.emplace(j.prompt_id + "\t" + j.expert, j.verdict);

    std::size_t wins = 0;
    std::string missing;
    std::size_t missing_count = 0;
    for (const auto& d : decisions) {
        const std::string key = d.prompt_id + "\t" + catalog.at(d.expert).name;
        auto it = verdicts.find(key);
        if (it == verdicts.end()) {
            ++missing_count;
            if (missing_count <= 10)
                missing += (missing.empty() ? "" : ", ") + d.prompt_id + "/" +
                           catalog.at(d.expert).name;
            continue;
        }
        if (it->second == Verdict::win) ++wins;
    }
    if (missing_count > 0)
        fail(ErrorCategory::validation, "missing verdicts for " + std::to_string(missing_count) +
                                            " routed prompts: " + missing);
    return static_cast<double>(wins) / static_cast<double>(decisions.size());
}

void save_routing_table(const RoutingTable& table, const std::filesystem::path& path,
                        const std::string& router_dir_ref, const std::string& catalog_ref) {
    validate_routing_table(table);
    const auto& categories = table.router->categories();
    json mapping;
    for (std::size_t i = 0; i < categories.size(); ++i)
        mapping[categories.name_of(i)] = table.catalog.at(table.category_to_expert[i]).name;
    json j{{"category_to_expert", mapping},
           {"router_dir", router_dir_ref},
           {"catalog", catalog_ref}};
    if (table.epsilon_t) j["epsilon_t"] = *table.epsilon_t;
    std::ofstream out(path);
    if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) fail(ErrorCategory::io, "write failed for " + path.string());
}

RoutingTable load_routing_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) fail(ErrorCategory::format, "malformed routing table " + path.string());

    const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    auto resolve = [&](const std::string& ref) {
        std::filesystem::path p(ref);
        return p.is_absolute() ? p : base / p;
    };

    SavedRouter saved = load_router(resolve(j.at("router_dir").get<std::string>()));
    ExpertCatalog catalog = load_catalog(resolve(j.at("catalog").get<std::string>()));

    RoutingTable table;
    table.router = std::make_shared<const KnnRouter>(std::move(saved.router));
    table.catalog = std::move(catalog);
    if (j.contains("epsilon_t"))
        table.epsilon_t = j["epsilon_t"].get<double>();
    else if (saved.epsilon_t)
        table.epsilon_t = saved.epsilon_t;

    const auto& categories = table.router->categories();
    table.category_to_expert.assign(categories.size(), 0);
    const auto& mapping = j.at("category_to_expert");
    for (std::size_t i = 0; i < categories.size(); ++i) {
        const std::string& name = categories.name_of(i);
        if (!mapping.contains(name))
            fail(ErrorCategory::validation,
                 "routing table missing category '" + name + "' in " + path.string());
        auto expert = table.catalog.index_of(mapping[name].get<std::string>());
        if (!expert)
            fail(ErrorCategory::validation, "routing table maps '" + name +
                                                "' to unknown expert in " + path.string());
        table.category_to_expert[i] = *expert;
    }
    validate_routing_table(table);
    return table;
}

void save_decisions(std::span<const RoutingDecision> decisions, const RoutingTable& table,
                    const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
    const auto& categories = table.router->categories();
    for (const auto& d : decisions) {
        out << json{{"prompt_id", d.prompt_id},
                    {"category", categories.name_of(d.category)},
                    {"entropy", d.entropy},
                    {"expert", table.catalog.at(d.expert).name},
                    {"expert_params_billions", d.expert_params_billions}}
                   .dump()
            << '\n';
    }
    if (!out) fail(ErrorCategory::io, "write failed for " + path.string());
}

}  // namespace coe
