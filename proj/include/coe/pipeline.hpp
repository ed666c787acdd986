#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "coe/router.hpp"

namespace coe {

struct PipelineConfig {
    double entropy_threshold = 0.5;  // nats; filter is strict (>)
    int k = 30;
    Distance distance = Distance::cosine;
};

struct AcceptedLabel {
    std::string id;
    std::size_t category;
    double entropy;
};

struct RejectedLabel {
    std::string id;
    double entropy;
};

/// accepted/rejected partition the labeled input: accepted entries have
/// entropy <= threshold, rejected entries entropy > threshold.
struct LabelingOutcome {
    std::vector<AcceptedLabel> accepted;
    std::vector<RejectedLabel> rejected;
};

/// Labels every prompt in `unlabeled` with a k-NN classifier trained on the
/// seed corpus and partitions by the entropy threshold. Output order follows
/// input order.
LabelingOutcome label_corpus(const AlignedCorpus& seed, const CategorySet& categories,
                             const AlignedCorpus& unlabeled, const PipelineConfig& config);

/// Count of accepted prompts per category index.
std::vector<std::size_t> category_histogram(const LabelingOutcome& outcome,
                                            std::size_t num_categories);

/// Accepted labels applied back onto the unlabeled prompts, ready to be saved
/// in the corpus prompt format.
std::vector<PromptRecord> apply_labels(const LabelingOutcome& outcome,
                                       const AlignedCorpus& unlabeled,
                                       const CategorySet& categories);

struct TranslationRow {
    std::string query;
    std::string in_lang;
    std::string out_lang;
};

struct CrossLingualRow {
    std::string query;
    std::string lang;
};

/// Applies every template to every row. Templates use {query}, {in-lang} and
/// {out-lang} placeholders; the output category is the target language and
/// ids are derived from (template index, row index).
std::vector<PromptRecord> expand_translation_templates(std::span<const std::string> templates,
                                                       std::span<const TranslationRow> rows);

/// Same with the {query}, {lang} placeholder set; category is the language.
std::vector<PromptRecord> expand_crosslingual_templates(std::span<const std::string> templates,
                                                        std::span<const CrossLingualRow> rows);

/// Line-delimited template file; placeholders in curly braces.
std::vector<std::string> load_templates(const std::filesystem::path& path);

}  // namespace coe
