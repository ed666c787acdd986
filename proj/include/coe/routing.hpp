#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coe/assignment.hpp"
#include "coe/corpus.hpp"
#include "coe/router.hpp"

namespace coe {

/// The assembled CoE: category router plus frozen category-to-expert map.
/// When epsilon_t is set the table is in robust mode and the router's
/// category set must contain "general".
struct RoutingTable {
    std::vector<std::size_t> category_to_expert;  // one expert per category index
    std::optional<double> epsilon_t;
    ExpertCatalog catalog;
    std::shared_ptr<const KnnRouter> router;
};

/// Builds a table from an assignment solution; the mapped expert set equals
/// the solution's selected experts by construction.
RoutingTable build_routing_table(std::shared_ptr<const KnnRouter> router, ExpertCatalog catalog,
                                 const AssignmentSolution& solution,
                                 std::optional<double> epsilon_t);

void validate_routing_table(const RoutingTable& table);

struct RoutingDecision {
    std::string prompt_id;
    std::size_t category = 0;
    double entropy = 0.0;
    std::size_t expert = 0;
    double expert_params_billions = 0.0;
};

/// Routes one embedding: category via the k-NN router (robust variant when
/// epsilon_t is set), expert via table lookup. Pure function of
/// (table, embedding).
RoutingDecision route(const RoutingTable& table, std::span<const float> embedding,
                      std::string prompt_id = {});

/// Each turn is routed independently on its own embedding, so experts may
/// change across a conversation.
std::vector<RoutingDecision> route_conversation(const RoutingTable& table,
                                                const EmbeddingMatrix& turns);

/// Mean parameter count (billions) of the experts actually chosen.
double average_active_params(std::span<const RoutingDecision> decisions);

/// Unweighted mean of per-benchmark scores, rounded to 3 decimals as reported.
double aggregate_scores(std::span<const double> per_benchmark_scores);

/// Fraction of decided prompts whose routed expert got a win verdict. Every
/// decided prompt must have a verdict for its routed expert.
double evaluate_winrate(std::span<const RoutingDecision> decisions,
                        std::span<const JudgmentRecord> judgments, const ExpertCatalog& catalog);

// Persistence: JSON file mapping category names to expert names with
// epsilon_t and references to the router directory and catalog file
// (relative paths are resolved against the table file's directory).
void save_routing_table(const RoutingTable& table, const std::filesystem::path& path,
                        const std::string& router_dir_ref, const std::string& catalog_ref);
RoutingTable load_routing_table(const std::filesystem::path& path);

void save_decisions(std::span<const RoutingDecision> decisions, const RoutingTable& table,
                    const std::filesystem::path& path);

}  // namespace coe
