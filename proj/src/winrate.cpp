#include "coe/winrate.hpp"

#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace coe {

using nlohmann::json;

std::vector<std::vector<std::string>> partition_by_category(
    std::span<const std::pair<std::string, std::size_t>> decisions,
    std::span<const PromptRecord> prompts, const CategorySet& categories) {
    std::unordered_set<std::string> known;
    known.reserve(prompts.size());
    for (const auto& p : prompts) known.insert(p.id);

    std::vector<std::vector<std::string>> parts(categories.size());
    std::unordered_set<std::string> seen;
    for (const auto& [id, category] : decisions) {
        if (!known.count(id))
            fail(ErrorCategory::validation, "decision for unknown prompt '" + id + "'");
        if (category >= categories.size())
            fail(ErrorCategory::validation, "decision category out of range for '" + id + "'");
        if (!seen.insert(id).second)
            fail(ErrorCategory::validation, "duplicate decision for prompt '" + id + "'");
        parts[category].push_back(id);
    }
    return parts;
}

LossMatrixBuild build_loss_matrix(const std::vector<std::vector<std::string>>& partition,
                                  std::span<const JudgmentRecord> judgments,
                                  const ExpertCatalog& catalog, const CategorySet& categories) {
    if (partition.size() != categories.size())
        fail(ErrorCategory::validation, "partition size does not match category set");

    std::unordered_map<std::string, std::size_t> category_of;
    for (std::size_t c = 0; c < partition.size(); ++c)
        for (const auto& id : partition[c]) category_of[id] = c;

    const std::size_t M = categories.size();
    const std::size_t K = catalog.size();
    std::vector<std::vector<std::size_t>> wins(M, std::vector<std::size_t>(K, 0));

    LossMatrixBuild build;
    build.matrix.categories = categories.names;
    for (const auto& e : catalog.experts) build.matrix.experts.push_back(e.name);
    build.matrix.values.assign(M, std::vector<double>(K, 0.0));
    build.matrix.counts.assign(M, std::vector<std::size_t>(K, 0));
    build.matrix.missing.assign(M, std::vector<unsigned char>(K, 0));

    for (const auto& j : judgments) {
        auto expert = catalog.index_of(j.expert);
        if (!expert)
            fail(ErrorCategory::validation, "verdict for unknown expert '" + j.expert + "'");
        auto it = category_of.find(j.prompt_id);
        if (it == category_of.end()) {
            ++build.skipped_verdicts;
            continue;
        }
        build.matrix.counts[it->second][*expert]++;
        if (j.verdict == Verdict::win) wins[it->second][*expert]++;
    }

    for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t j = 0; j < K; ++j) {
            const std::size_t total = build.matrix.counts[i][j];
            if (total == 0) {
                build.matrix.missing[i][j] = 1;
                build.missing_cells.emplace_back(i, j);
            } else {
                build.matrix.values[i][j] =
                    -(static_cast<double>(wins[i][j]) / static_cast<double>(total));
            }
        }
    }
    return build;
}

std::map<std::string, std::string> best_expert_per_prompt(
    std::span<const JudgmentRecord> judgments, const ExpertCatalog& catalog,
    std::span<const PromptRecord> prompts) {
    // wins per (prompt, expert index)
    std::unordered_map<std::string, std::vector<std::ptrdiff_t>> wins;
    for (const auto& j : judgments) {
        auto expert = catalog.index_of(j.expert);
        if (!expert)
            fail(ErrorCategory::validation, "verdict for unknown expert '" + j.expert + "'");
        auto& row = wins[j.prompt_id];
        if (row.empty()) row.assign(catalog.size(), -1);  // -1: no verdicts for this expert
        if (row[*expert] < 0) row[*expert] = 0;
        if (j.verdict == Verdict::win) row[*expert]++;
    }

    for (const auto& p : prompts)
        if (!wins.count(p.id))
            fail(ErrorCategory::validation, "prompt '" + p.id + "' has no verdicts");

    std::map<std::string, std::string> best;
    for (const auto& [id, row] : wins) {
        std::size_t best_idx = 0;
        std::ptrdiff_t best_wins = -1;
        for (std::size_t j = 0; j < row.size(); ++j) {
            if (row[j] > best_wins) {
                best_wins = row[j];
                best_idx = j;
            }
        }
        best[id] = catalog.at(best_idx).name;
    }
    return best;
}

void save_loss_matrix(const LossMatrix& matrix, const std::filesystem::path& path) {
    json j{{"categories", matrix.categories},
           {"experts", matrix.experts},
           {"values", matrix.values},
           {"counts", matrix.counts}};
    json missing = json::array();
    for (const auto& row : matrix.missing) {
        json jrow = json::array();
        for (auto flag : row) jrow.push_back(flag != 0);
        missing.push_back(std::move(jrow));
    }
    j["missing"] = std::move(missing);
    std::ofstream out(path);
    if (!out) fail(ErrorCategory::io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) fail(ErrorCategory::io, "write failed for " + path.string());
}

LossMatrix load_loss_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) fail(ErrorCategory::format, "malformed loss matrix " + path.string());

    LossMatrix matrix;
    matrix.categories = j.at("categories").get<std::vector<std::string>>();
    matrix.experts = j.at("experts").get<std::vector<std::string>>();
    matrix.values = j.at("values").get<std::vector<std::vector<double>>>();
    matrix.counts = j.at("counts").get<std::vector<std::vector<std::size_t>>>();
    for (const auto& row : j.at("missing")) {
        std::vector<unsigned char> flags;
        for (const auto& f : row) flags.push_back(f.get<bool>() ? 1 : 0);
        matrix.missing.push_back(std::move(flags));
    }
    const std::size_t M = matrix.categories.size();
    const std::size_t K = matrix.experts.size();
    auto shape_ok = [&](const auto& rows) {
        if (rows.size() != M) return false;
        for (const auto& r : rows)
            if (r.size() != K) return false;
        return true;
    };
    if (!shape_ok(matrix.values) || !shape_ok(matrix.counts) || !shape_ok(matrix.missing))
        fail(ErrorCategory::format, "loss matrix shape mismatch in " + path.string());
    return matrix;
}

}  // namespace coe
