#include "coe/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

namespace coe {

void MilpInstance::validate() const {
    if (loss.empty()) fail(ErrorCategory::validation, "instance has no categories");
    if (sizes.empty()) fail(ErrorCategory::validation, "instance has no experts");
    for (const auto& row : loss)
        if (row.size() != sizes.size())
            fail(ErrorCategory::validation, "loss row width does not match expert count");
    for (double s : sizes)
        if (!(s > 0)) fail(ErrorCategory::validation, "expert sizes must be positive");
    if (!(budget > 0)) fail(ErrorCategory::validation, "budget must be positive");
    if (budget < *std::min_element(sizes.begin(), sizes.end()))
        fail(ErrorCategory::infeasible,
             "budget " + std::to_string(budget) + " below the smallest expert");
}

namespace {

/// Candidate solution for a fixed expert subset: each category takes its
/// argmin expert within the subset (lowest index on ties); y is the support
/// of the resulting C, which is what the budget constraint binds.
struct Candidate {
    std::vector<std::size_t> assignment;
    std::vector<std::uint8_t> y;
    double objective = 0.0;
};

Candidate evaluate_subset(const MilpInstance& inst, const std::vector<std::uint8_t>& member) {
    const std::size_t M = inst.num_categories();
    const std::size_t K = inst.num_experts();
    Candidate cand;
    cand.assignment.resize(M);
    cand.y.assign(K, 0);
    for (std::size_t i = 0; i < M; ++i) {
        std::size_t best = K;
        double best_loss = 0.0;
        for (std::size_t j = 0; j < K; ++j) {
            if (!member[j]) continue;
            if (best == K || inst.loss[i][j] < best_loss) {
                best = j;
                best_loss = inst.loss[i][j];
            }
        }
        cand.assignment[i] = best;
        cand.y[best] = 1;
        cand.objective += best_loss;
    }
    return cand;
}

bool lex_less(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

/// True when `cand` beats `best`: strictly smaller objective, or equal
/// objective with lexicographically smaller y.
bool improves(const Candidate& cand, const std::optional<Candidate>& best) {
    if (!best) return true;
    if (cand.objective != best->objective) return cand.objective < best->objective;
    return lex_less(cand.y, best->y);
}

AssignmentSolution to_solution(Candidate cand) {
    AssignmentSolution sol;
    sol.category_to_expert = std::move(cand.assignment);
    sol.y = std::move(cand.y);
    sol.objective = cand.objective;
    for (std::size_t j = 0; j < sol.y.size(); ++j)
        if (sol.y[j]) sol.selected_experts.push_back(j);
    return sol;
}

struct BranchAndBound {
    const MilpInstance& inst;
    std::vector<std::uint8_t> member;  // 1 = chosen, undecided treated as available
    std::optional<Candidate> best;

    explicit BranchAndBound(const MilpInstance& instance)
        : inst(instance), member(instance.num_experts(), 0) {}

    /// Lower bound with experts `depth..K-1` still undecided: every category
    /// may use any chosen or undecided expert.
    double lower_bound(std::size_t depth) const {
        double bound = 0.0;
        for (std::size_t i = 0; i < inst.num_categories(); ++i) {
            double m = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < inst.num_experts(); ++j) {
                if (j < depth && !member[j]) continue;
                m = std::min(m, inst.loss[i][j]);
            }
            bound += m;
        }
        return bound;
    }

    void search(std::size_t depth, double used_budget, bool any_chosen) {
        if (best && lower_bound(depth) >= best->objective) return;
        if (depth == inst.num_experts()) {
            if (!any_chosen) return;
            Candidate cand = evaluate_subset(inst, member);
            if (improves(cand, best)) best = std::move(cand);
            return;
        }
        // Exclude-first keeps the subset enumeration in lexicographic order.
        member[depth] = 0;
        search(depth + 1, used_budget, any_chosen);
        if (used_budget + inst.sizes[depth] <= inst.budget) {
            member[depth] = 1;
            search(depth + 1, used_budget + inst.sizes[depth], true);
            member[depth] = 0;
        }
    }
};

}  // namespace

AssignmentSolution solve(const MilpInstance& instance) {
    instance.validate();
    BranchAndBound bb(instance);
    bb.search(0, 0.0, false);
    if (!bb.best) fail(ErrorCategory::infeasible, "no expert subset fits the budget");
    return to_solution(std::move(*bb.best));
}

AssignmentSolution solve_exhaustive(const MilpInstance& instance) {
    instance.validate();
    const std::size_t K = instance.num_experts();
    if (K > 25) fail(ErrorCategory::validation, "exhaustive solve limited to K <= 25");

    std::optional<Candidate> best;
    std::vector<std::uint8_t> member(K, 0);
    for (std::uint64_t mask = 1; mask < (std::uint64_t{1} << K); ++mask) {
        double total = 0.0;
        for (std::size_t j = 0; j < K; ++j) {
            member[j] = (mask >> j) & 1;
            if (member[j]) total += instance.sizes[j];
        }
        if (total > instance.budget) continue;
        Candidate cand = evaluate_subset(instance, member);
        if (improves(cand, best)) best = std::move(cand);
    }
    if (!best) fail(ErrorCategory::infeasible, "no expert subset fits the budget");
    return to_solution(std::move(*best));
}

StandardFormMilp build_standard_form(const MilpInstance& instance) {
    const std::size_t M = instance.num_categories();
    const std::size_t K = instance.num_experts();
    const std::size_t n = M * K + K;

    StandardFormMilp form;
    form.num_categories = M;
    form.num_experts = K;
    form.objective.assign(n, 0.0);
    for (std::size_t j = 0; j < K; ++j)
        for (std::size_t i = 0; i < M; ++i) form.objective[j * M + i] = instance.loss[i][j];

    form.A.assign(1 + 2 * K, std::vector<double>(n, 0.0));
    form.b.assign(1 + 2 * K, 0.0);
    for (std::size_t j = 0; j < K; ++j) form.A[0][M * K + j] = instance.sizes[j];
    form.b[0] = instance.budget;
    for (std::size_t j = 0; j < K; ++j) {
        auto& up = form.A[1 + j];          // sum_i c_ij - M y_j <= 0
        auto& lo = form.A[1 + K + j];      // y_j - sum_i c_ij <= 0
        for (std::size_t i = 0; i < M; ++i) {
            up[j * M + i] = 1.0;
            lo[j * M + i] = -1.0;
        }
        up[M * K + j] = -static_cast<double>(M);
        lo[M * K + j] = 1.0;
    }

    form.A_eq.assign(M, std::vector<double>(n, 0.0));
    form.b_eq.assign(M, 1.0);
    for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < K; ++j) form.A_eq[i][j * M + i] = 1.0;
    return form;
}

bool standard_form_feasible(const StandardFormMilp& form, std::span<const std::uint8_t> x) {
    if (x.size() != form.num_variables())
        fail(ErrorCategory::dimension, "point size does not match standard form");
    for (std::size_t r = 0; r < form.A.size(); ++r) {
        double lhs = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c)
            if (x[c]) lhs += form.A[r][c];
        if (lhs > form.b[r]) return false;
    }
    for (std::size_t r = 0; r < form.A_eq.size(); ++r) {
        double lhs = 0.0;
        for (std::size_t c = 0; c < x.size(); ++c)
            if (x[c]) lhs += form.A_eq[r][c];
        if (lhs != form.b_eq[r]) return false;
    }
    return true;
}

namespace {

std::string variable_name(const StandardFormMilp& form, std::size_t index) {
    const std::size_t M = form.num_categories;
    if (index < M * form.num_experts)
        return "c_" + std::to_string(index % M + 1) + "_" + std::to_string(index / M + 1);
    return "y_" + std::to_string(index - M * form.num_experts + 1);
}

std::string format_coef(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_terms(std::ofstream& out, const std::vector<double>& row, const StandardFormMilp& form) {
    bool first = true;
    for (std::size_t c = 0; c < row.size(); ++c) {
        if (row[c] == 0.0) continue;
        const double v = row[c];
        if (first) {
            out << (v < 0 ? "- " : "") << format_coef(std::fabs(v));
            first = false;
        } else {
            out << (v < 0 ? " - " : " + ") << format_coef(std::fabs(v));
        }
        out << ' ' << variable_name(form, c);
    }
    if (first) out << "0 " << variable_name(form, 0);
}

}  // namespace

void export_lp(const StandardFormMilp& form, const std::filesystem::path& path) {
    if (path.empty()) fail(ErrorCategory::io, "empty LP export path");
    std::ofstream out(path);
    if (!out) fail(ErrorCategory::io, "cannot write " + path.string());

    const std::size_t M = form.num_categories;
    const std::size_t K = form.num_experts;
    out << "\\ category-to-expert assignment (" << M << " categories, " << K << " experts)\n";
    out << "Minimize\n obj: ";
    write_terms(out, form.objective, form);
    out << "\nSubject To\n";
    out << " budget: ";
    write_terms(out, form.A[0], form);
    out << " <= " << format_coef(form.b[0]) << '\n';
    for (std::size_t j = 0; j < K; ++j) {
        out << " link_up_" << j + 1 << ": ";
        write_terms(out, form.A[1 + j], form);
        out << " <= " << format_coef(form.b[1 + j]) << '\n';
    }
    for (std::size_t j = 0; j < K; ++j) {
        out << " link_lo_" << j + 1 << ": ";
        write_terms(out, form.A[1 + K + j], form);
        out << " <= " << format_coef(form.b[1 + K + j]) << '\n';
    }
    for (std::size_t i = 0; i < M; ++i) {
        out << " assign_" << i + 1 << ": ";
        write_terms(out, form.A_eq[i], form);
        out << " = " << format_coef(form.b_eq[i]) << '\n';
    }
    out << "Binary\n";
    for (std::size_t c = 0; c < form.num_variables(); ++c)
        out << ' ' << variable_name(form, c) << '\n';
    out << "End\n";
    if (!out) fail(ErrorCategory::io, "write failed for " + path.string());
}

std::vector<BudgetSweepEntry> budget_sweep(const std::vector<std::vector<double>>& loss,
                                           const std::vector<double>& sizes,
                                           std::span<const double> budgets) {
    for (std::size_t i = 1; i < budgets.size(); ++i)
        if (budgets[i] < budgets[i - 1])
            fail(ErrorCategory::validation, "budgets must be sorted ascending");

    std::vector<BudgetSweepEntry> entries;
    entries.reserve(budgets.size());
    for (double budget : budgets) {
        BudgetSweepEntry entry{budget, std::nullopt};
        MilpInstance instance{loss, sizes, budget};
        try {
            entry.solution = solve(instance);
        } catch (const Error& e) {
            if (e.category() != ErrorCategory::infeasible) throw;
        }
        entries.push_back(std::move(entry));
    }
    return entries;
}

void save_solution(const AssignmentSolution& solution, std::span<const std::string> categories,
                   std::span<const std::string> experts, const std::filesystem::path& path) {
    if (solution.category_to_expert.size() != categories.size())
        fail(ErrorCategory::validation, "solution size does not match category names");
    nlohmann::json mapping;
    for (std::size_t i = 0; i < categories.size(); ++i)
        mapping[categories[i]] = experts[solution.category_to_expert[i]];
    nlohmann::json selected = nlohmann::json::array();
    for (std::size_t j : solution.selected_experts) selected.push_back(experts[j]);
    nlohmann::json j{{"category_to_expert", mapping},
                     {"objective", solution.objective},
                     {"selected_experts", selected}};
    std::ofstream out(path);
    if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) fail(ErrorCategory::io, "write failed for " + path.string());
}

}  // namespace coe
