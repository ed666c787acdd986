#include "coe/pipeline.hpp"

#include <fstream>
#include <unordered_set>

namespace coe {

LabelingOutcome label_corpus(const AlignedCorpus& seed, const CategorySet& categories,
                             const AlignedCorpus& unlabeled, const PipelineConfig& config) {
    if (config.entropy_threshold < 0)
        fail(ErrorCategory::validation, "entropy_threshold must be >= 0");
    if (unlabeled.size() > 0 && seed.embeddings.dim() != unlabeled.embeddings.dim())
        fail(ErrorCategory::dimension,
             "seed dim " + std::to_string(seed.embeddings.dim()) + " != unlabeled dim " +
                 std::to_string(unlabeled.embeddings.dim()));
    {
        std::unordered_set<std::string> seed_ids;
        for (const auto& p : seed.prompts) seed_ids.insert(p.id);
        for (const auto& p : unlabeled.prompts)
            if (seed_ids.count(p.id))
                fail(ErrorCategory::validation, "unlabeled id '" + p.id + "' also present in seed");
    }

    KnnRouter router = KnnRouter::from_corpus(seed, config.k, config.distance, categories);
    LabelingOutcome outcome;
    for (std::size_t i = 0; i < unlabeled.size(); ++i) {
        auto pred = router.predict(unlabeled.embeddings.row(i));
        const std::string& id = unlabeled.prompts[i].id;
        if (pred.entropy > config.entropy_threshold)
            outcome.rejected.push_back({id, pred.entropy});
        else
            outcome.accepted.push_back({id, pred.predicted, pred.entropy});
    }
    return outcome;
}

std::vector<std::size_t> category_histogram(const LabelingOutcome& outcome,
                                            std::size_t num_categories) {
    std::vector<std::size_t> hist(num_categories, 0);
    for (const auto& a : outcome.accepted) {
        if (a.category >= num_categories)
            fail(ErrorCategory::validation, "accepted label out of category range");
        hist[a.category]++;
    }
    return hist;
}

std::vector<PromptRecord> apply_labels(const LabelingOutcome& outcome,
                                       const AlignedCorpus& unlabeled,
                                       const CategorySet& categories) {
    std::vector<PromptRecord> labeled;
    labeled.reserve(outcome.accepted.size());
    for (const auto& a : outcome.accepted) {
        auto row = unlabeled.embeddings.row_of(a.id);
        if (!row) fail(ErrorCategory::validation, "accepted id '" + a.id + "' not in corpus");
        PromptRecord rec = unlabeled.prompts[*row];
        rec.category = categories.name_of(a.category);
        labeled.push_back(std::move(rec));
    }
    return labeled;
}

// --- template expansion ---------------------------------------------------------

namespace {

/// Substitutes each {name} occurrence using the (name, value) pairs; any
/// placeholder outside the allowed set is an error.
std::string render_template(const std::string& tmpl,
                            std::span<const std::pair<std::string, const std::string*>> values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const std::size_t open = tmpl.find('{', pos);
        if (open == std::string::npos) {
            out.append(tmpl, pos, std::string::npos);
            break;
        }
        const std::size_t close = tmpl.find('}', open + 1);
        if (close == std::string::npos) {
            out.append(tmpl, pos, std::string::npos);
            break;
        }
        out.append(tmpl, pos, open - pos);
        const std::string name = tmpl.substr(open + 1, close - open - 1);
        const std::string* value = nullptr;
        for (const auto& [key, v] : values)
            if (key == name) value = v;
        if (!value)
            fail(ErrorCategory::validation, "unknown placeholder '{" + name + "}' in template");
        out.append(*value);
        pos = close + 1;
    }
    return out;
}

}  // namespace

std::vector<PromptRecord> expand_translation_templates(std::span<const std::string> templates,
                                                       std::span<const TranslationRow> rows) {
    std::vector<PromptRecord> prompts;
    prompts.reserve(templates.size() * rows.size());
    for (std::size_t t = 0; t < templates.size(); ++t) {
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto& row = rows[r];
            const std::pair<std::string, const std::string*> values[] = {
                {"query", &row.query}, {"in-lang", &row.in_lang}, {"out-lang", &row.out_lang}};
            PromptRecord rec;
            rec.id = "tr-" + std::to_string(t) + "-" + std::to_string(r);
            rec.text = render_template(templates[t], values);
            rec.category = row.out_lang;
            prompts.push_back(std::move(rec));
        }
    }
    return prompts;
}

std::vector<PromptRecord> expand_crosslingual_templates(std::span<const std::string> templates,
                                                        std::span<const CrossLingualRow> rows) {
    std::vector<PromptRecord> prompts;
    prompts.reserve(templates.size() * rows.size());
    for (std::size_t t = 0; t < templates.size(); ++t) {
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto& row = rows[r];
            const std::pair<std::string, const std::string*> values[] = {{"query", &row.query},
                                                                         {"lang", &row.lang}};
            PromptRecord rec;
            rec.id = "xl-" + std::to_string(t) + "-" + std::to_string(r);
            rec.text = render_template(templates[t], values);
            rec.category = row.lang;
            prompts.push_back(std::move(rec));
        }
    }
    return prompts;
}

std::vector<std::string> load_templates(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
    std::vector<std::string> templates;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) templates.push_back(line);
    return templates;
}

}  // namespace coe
