#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "coe/corpus.hpp"

namespace coe {

/// The M by K matrix of negative win-rates: values[i][j] = -wins/(wins+losses)
/// of expert j on prompts routed to category i. Cells with no verdicts are
/// flagged missing and imputed as 0 (the worst value) so the assignment solver
/// never prefers an unevaluated expert.
struct LossMatrix {
    std::vector<std::string> categories;
    std::vector<std::string> experts;
    std::vector<std::vector<double>> values;        // in [-1, 0]
    std::vector<std::vector<std::size_t>> counts;   // wins + losses per cell
    std::vector<std::vector<unsigned char>> missing;

    std::size_t num_categories() const { return categories.size(); }
    std::size_t num_experts() const { return experts.size(); }
};

struct LossMatrixBuild {
    LossMatrix matrix;
    std::size_t skipped_verdicts = 0;  // verdicts for prompts outside every partition
    std::vector<std::pair<std::size_t, std::size_t>> missing_cells;  // (category, expert)
};

/// Splits the decided prompts into per-category sets D_1..D_M. Every decision
/// must name a known prompt and a category inside the set.
std::vector<std::vector<std::string>> partition_by_category(
    std::span<const std::pair<std::string, std::size_t>> decisions,
    std::span<const PromptRecord> prompts, const CategorySet& categories);

LossMatrixBuild build_loss_matrix(const std::vector<std::vector<std::string>>& partition,
                                  std::span<const JudgmentRecord> judgments,
                                  const ExpertCatalog& catalog, const CategorySet& categories);

/// Per prompt, the expert with the most wins; ties go to the lower catalog
/// index. When `prompts` is given, every prompt must carry at least one
/// verdict.
std::map<std::string, std::string> best_expert_per_prompt(
    std::span<const JudgmentRecord> judgments, const ExpertCatalog& catalog,
    std::span<const PromptRecord> prompts = {});

void save_loss_matrix(const LossMatrix& matrix, const std::filesystem::path& path);
LossMatrix load_loss_matrix(const std::filesystem::path& path);

}  // namespace coe
