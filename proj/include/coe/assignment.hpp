#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "coe/error.hpp"

namespace coe {

/// One category-to-expert assignment problem: minimize sum_ij loss[i][j]*C[i][j]
/// over binary C with one-hot rows, subject to the selected-expert parameter
/// budget sizes' * y <= budget where y is the support of C' * 1.
struct MilpInstance {
    std::vector<std::vector<double>> loss;  // M x K
    std::vector<double> sizes;              // K, billions
    double budget = 0.0;                    // billions

    std::size_t num_categories() const { return loss.size(); }
    std::size_t num_experts() const { return sizes.size(); }
    void validate() const;
};

/// C is stored as one expert index per category (rows are one-hot). y is
/// exactly the support of C: y[j] == 1 iff some category maps to expert j.
struct AssignmentSolution {
    std::vector<std::size_t> category_to_expert;  // M entries
    std::vector<std::uint8_t> y;                  // K entries
    double objective = 0.0;
    std::vector<std::size_t> selected_experts;    // indices with y[j] == 1
};

/// Globally optimal solve via branch-and-bound over expert subsets: for a
/// fixed subset the best C maps each category to its argmin expert, so the
/// search only branches on membership, pruning by budget and by the
/// everyone-available lower bound. Ties between optima resolve to the
/// lexicographically smallest y, then per category to the lowest expert index.
AssignmentSolution solve(const MilpInstance& instance);

/// Oracle: enumerates all 2^K subsets with the same tie-breaking. K <= 25.
AssignmentSolution solve_exhaustive(const MilpInstance& instance);

/// Dense standard-form encoding with variables x = [vec(C); y], vec(C)
/// column-stacked (all categories for expert 1, then expert 2, ...).
/// Inequalities A x <= b: row 0 is the budget row [0', sizes'], rows 1..K are
/// [I_K (x) 1_M', -M I_K], rows K+1..2K are [-I_K (x) 1_M', I_K]. Equalities
/// Aeq x = 1_M pin one expert per category. All variables binary.
struct StandardFormMilp {
    std::size_t num_categories = 0;
    std::size_t num_experts = 0;
    std::vector<double> objective;            // MK + K
    std::vector<std::vector<double>> A;       // (1 + 2K) x (MK + K)
    std::vector<double> b;                    // 1 + 2K
    std::vector<std::vector<double>> A_eq;    // M x (MK + K)
    std::vector<double> b_eq;                 // M

    std::size_t num_variables() const { return objective.size(); }
};

StandardFormMilp build_standard_form(const MilpInstance& instance);

/// True iff the binary point x = [vec(C); y] satisfies every standard-form
/// constraint.
bool standard_form_feasible(const StandardFormMilp& form, std::span<const std::uint8_t> x);

/// Writes the instance in LP text format for external solvers; variables are
/// named c_i_j and y_j (1-based).
void export_lp(const StandardFormMilp& form, const std::filesystem::path& path);

struct BudgetSweepEntry {
    double budget = 0.0;
    std::optional<AssignmentSolution> solution;  // empty when infeasible
};

/// Solves the same loss/sizes instance for each budget (non-decreasing order
/// required). Infeasible budgets are reported, not fatal.
std::vector<BudgetSweepEntry> budget_sweep(const std::vector<std::vector<double>>& loss,
                                           const std::vector<double>& sizes,
                                           std::span<const double> budgets);

/// Solution export: category name -> expert name, objective and selected set.
void save_solution(const AssignmentSolution& solution, std::span<const std::string> categories,
                   std::span<const std::string> experts, const std::filesystem::path& path);

}  // namespace coe
