#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "coe/corpus.hpp"

namespace coe {

enum class Distance { cosine, euclidean };

const char* to_string(Distance distance);
Distance parse_distance(const std::string& text);

/// Per-category vote distribution for one query.
/// probabilities sum to 1; predicted is the argmax (lowest index on ties);
/// entropy is -sum p ln p in nats, in [0, ln M].
struct CategoryPrediction {
    std::vector<double> probabilities;
    std::size_t predicted = 0;
    double entropy = 0.0;
};

struct RouterEvalReport {
    double accuracy = 0.0;
    std::vector<std::vector<std::size_t>> confusion;  // [actual][predicted]
    std::map<int, std::pair<double, double>> per_k_accuracy;  // k -> (train, val)
};

/// Exact k-NN category classifier over dense embeddings with uniform votes.
/// Immutable after construction; predict is pure and safe under concurrent
/// callers.
class KnnRouter {
public:
    KnnRouter(EmbeddingMatrix reference, std::vector<std::size_t> labels, int k,
              Distance distance, CategorySet categories);

    /// Builds the reference set from a labeled aligned corpus; every prompt
    /// must carry a category from `categories`.
    static KnnRouter from_corpus(const AlignedCorpus& corpus, int k, Distance distance,
                                 CategorySet categories);

    CategoryPrediction predict(std::span<const float> embedding) const;

    /// Like predict, but reroutes to the general category when the vote
    /// entropy exceeds epsilon_t (strictly). probabilities and entropy still
    /// describe the base prediction.
    CategoryPrediction predict_robust(std::span<const float> embedding, double epsilon_t) const;

    /// predict with one reference row hidden from the neighbor search; used
    /// for leave-one-out accuracy on the reference split itself.
    CategoryPrediction predict_excluding(std::span<const float> embedding,
                                         std::ptrdiff_t exclude_row) const;

    const EmbeddingMatrix& reference() const { return reference_; }
    const std::vector<std::size_t>& labels() const { return labels_; }
    const CategorySet& categories() const { return categories_; }
    int k() const { return k_; }
    Distance distance() const { return distance_; }

private:
    EmbeddingMatrix reference_;
    std::vector<std::size_t> labels_;
    std::vector<double> reference_norms_;
    int k_;
    Distance distance_;
    CategorySet categories_;
};

/// Accuracy on train (leave-one-out) and val splits for each candidate k.
/// Reference set is always `train`.
std::map<int, std::pair<double, double>> sweep_k(const AlignedCorpus& train,
                                                 const AlignedCorpus& val,
                                                 std::span<const int> ks, Distance distance,
                                                 const CategorySet& categories);

/// Confusion matrix and accuracy of `router` on a labeled test corpus.
RouterEvalReport evaluate(const KnnRouter& router, const AlignedCorpus& test);

// Router persistence: a directory holding the reference embeddings (binary
// corpus format), a labels TSV (id <TAB> category) and a JSON config with k,
// distance, optional epsilon_t and the category names.

struct SavedRouter {
    KnnRouter router;
    std::optional<double> epsilon_t;
};

void save_router(const KnnRouter& router, const std::filesystem::path& dir,
                 std::optional<double> epsilon_t = std::nullopt);
SavedRouter load_router(const std::filesystem::path& dir);

}  // namespace coe
