#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "coe/error.hpp"

namespace coe {

enum class Split { train, val, test };

const char* to_string(Split split);
Split parse_split(const std::string& text);

/// A single prompt. `category` must belong to the declared category set when
/// one is in force; `split` marks train/val/test membership.
struct PromptRecord {
    std::string id;
    std::string text;
    std::optional<std::string> category;
    std::optional<Split> split;
};

/// Ordered category names. Index order is the category index used everywhere
/// downstream. The reserved name "general" is tracked so the robust routing
/// path can find it.
struct CategorySet {
    std::vector<std::string> names;
    std::optional<std::size_t> general_index;

    static CategorySet from_names(std::vector<std::string> names);

    /// Same set with a "general" category appended (no-op if already present).
    CategorySet with_general() const;

    std::size_t size() const { return names.size(); }
    bool has_general() const { return general_index.has_value(); }
    std::optional<std::size_t> index_of(const std::string& name) const;
    const std::string& name_of(std::size_t index) const;
};

/// Dense row-major f32 embedding matrix keyed by prompt id.
/// Immutable after construction; rows are validated to be finite.
class EmbeddingMatrix {
public:
    EmbeddingMatrix() = default;
    EmbeddingMatrix(std::vector<std::string> ids, std::uint32_t dim, std::vector<float> data);

    std::size_t rows() const { return ids_.size(); }
    std::uint32_t dim() const { return dim_; }
    std::span<const float> row(std::size_t i) const;
    const std::vector<std::string>& ids() const { return ids_; }
    const std::vector<float>& data() const { return data_; }
    std::optional<std::size_t> row_of(const std::string& id) const;

private:
    std::vector<std::string> ids_;
    std::uint32_t dim_ = 0;
    std::vector<float> data_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct Expert {
    std::string name;
    double params_billions = 0.0;
    double bytes_per_param = 2.0;
    std::optional<std::string> endpoint;
};

/// Catalog order defines the expert index used by the loss matrix, the
/// assignment solver and every routing table.
struct ExpertCatalog {
    std::vector<Expert> experts;

    static ExpertCatalog from_experts(std::vector<Expert> experts);

    std::size_t size() const { return experts.size(); }
    std::optional<std::size_t> index_of(const std::string& name) const;
    const Expert& at(std::size_t index) const;

    /// The expert size vector, in billions of parameters.
    std::vector<double> sizes_billions() const;
};

enum class Verdict { win, loss };

const char* to_string(Verdict verdict);
Verdict parse_verdict(const std::string& text);

/// One judge verdict: did `expert` produce a completion judged similar or
/// better than the reference for `prompt_id`?
struct JudgmentRecord {
    std::string prompt_id;
    std::string expert;
    Verdict verdict;
};

/// Prompts joined with their embedding rows, in prompt order. `embeddings`
/// holds exactly one row per prompt in `prompts`.
struct AlignedCorpus {
    std::vector<PromptRecord> prompts;
    EmbeddingMatrix embeddings;
    std::size_t unmatched_prompts = 0;
    std::size_t unmatched_embeddings = 0;

    std::size_t size() const { return prompts.size(); }
};

// --- persistence -----------------------------------------------------------
// Prompts and judgments are line-delimited JSON objects. Embeddings use the
// binary format: magic "COEEMB1\0", u32 version=1, u32 count, u32 dim, then
// per row a u16 id length, the id bytes and dim little-endian f32 values.

std::vector<PromptRecord> load_prompts(const std::filesystem::path& path);
std::vector<PromptRecord> load_prompts(const std::filesystem::path& path,
                                       const CategorySet& categories);
void save_prompts(std::span<const PromptRecord> prompts, const std::filesystem::path& path);

EmbeddingMatrix load_embeddings(const std::filesystem::path& path);
void save_embeddings(const EmbeddingMatrix& matrix, const std::filesystem::path& path);

ExpertCatalog load_catalog(const std::filesystem::path& path);
void save_catalog(const ExpertCatalog& catalog, const std::filesystem::path& path);

std::vector<JudgmentRecord> load_judgments(const std::filesystem::path& path);
void save_judgments(std::span<const JudgmentRecord> judgments, const std::filesystem::path& path);

/// Checks that every judgment names a known prompt and a cataloged expert.
void validate_judgments(std::span<const JudgmentRecord> judgments,
                        std::span<const PromptRecord> prompts, const ExpertCatalog& catalog);

/// Inner join of prompts and embedding rows on id. Mismatches are counted,
/// never fatal.
AlignedCorpus join(std::span<const PromptRecord> prompts, const EmbeddingMatrix& embeddings);

/// Rows of `corpus` whose prompt is tagged with `split`.
AlignedCorpus filter_split(const AlignedCorpus& corpus, Split split);

}  // namespace coe
