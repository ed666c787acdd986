#include "coe/router.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <thread>

#include <json.hpp>

namespace coe {

using nlohmann::json;

const char* to_string(Distance distance) {
    return distance == Distance::cosine ? "cosine" : "euclidean";
}

Distance parse_distance(const std::string& text) {
    if (text == "cosine") return Distance::cosine;
    if (text == "euclidean") return Distance::euclidean;
    fail(ErrorCategory::format, "unknown distance '" + text + "'");
}

namespace {

double dot(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

double squared_euclidean(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        s += d * d;
    }
    return s;
}

/// Runs fn(i) for i in [0, n) across a few worker threads. Each index writes
/// only its own output slot, so results are independent of scheduling.
template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    unsigned workers = std::min<unsigned>(std::thread::hardware_concurrency(), 8);
    if (workers <= 1 || n < 64) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
        std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t i = lo; i < hi; ++i) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace

KnnRouter::KnnRouter(EmbeddingMatrix reference, std::vector<std::size_t> labels, int k,
                     Distance distance, CategorySet categories)
    : reference_(std::move(reference)),
      labels_(std::move(labels)),
      k_(k),
      distance_(distance),
      categories_(std::move(categories)) {
    if (reference_.rows() == 0) fail(ErrorCategory::validation, "empty reference set");
    if (labels_.size() != reference_.rows())
        fail(ErrorCategory::validation, "label count does not match reference rows");
    if (k_ <= 0 || static_cast<std::size_t>(k_) > reference_.rows())
        fail(ErrorCategory::validation,
             "k=" + std::to_string(k_) + " out of range for " + std::to_string(reference_.rows()) +
                 " reference rows");
    for (std::size_t label : labels_)
        if (label >= categories_.size())
            fail(ErrorCategory::validation, "reference label out of range");
    reference_norms_.resize(reference_.rows());
    for (std::size_t i = 0; i < reference_.rows(); ++i)
        reference_norms_[i] = std::sqrt(dot(reference_.row(i), reference_.row(i)));
}

KnnRouter KnnRouter::from_corpus(const AlignedCorpus& corpus, int k, Distance distance,
                                 CategorySet categories) {
    std::vector<std::size_t> labels;
    labels.reserve(corpus.prompts.size());
    for (const auto& p : corpus.prompts) {
        if (!p.category)
            fail(ErrorCategory::validation, "prompt '" + p.id + "' has no category label");
        auto idx = categories.index_of(*p.category);
        if (!idx)
            fail(ErrorCategory::validation,
                 "prompt '" + p.id + "' labeled with unknown category '" + *p.category + "'");
        labels.push_back(*idx);
    }
    return KnnRouter(corpus.embeddings, std::move(labels), k, distance, std::move(categories));
}

CategoryPrediction KnnRouter::predict_excluding(std::span<const float> embedding,
                                                std::ptrdiff_t exclude_row) const {
    if (embedding.size() != reference_.dim())
        fail(ErrorCategory::dimension, "query dim " + std::to_string(embedding.size()) +
                                           " != reference dim " + std::to_string(reference_.dim()));

    const std::size_t n = reference_.rows();
    std::vector<std::pair<double, std::size_t>> dists;
    dists.reserve(n);
    double query_norm = 0.0;
    if (distance_ == Distance::cosine) query_norm = std::sqrt(dot(embedding, embedding));
    for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<std::ptrdiff_t>(i) == exclude_row) continue;
        double d;
        if (distance_ == Distance::cosine) {
            const double denom = query_norm * reference_norms_[i];
            const double sim = denom > 0 ? dot(embedding, reference_.row(i)) / denom : 0.0;
            d = 1.0 - sim;
        } else {
            d = squared_euclidean(embedding, reference_.row(i));
        }
        dists.emplace_back(d, i);
    }
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(k_), dists.size());
    if (k == 0) fail(ErrorCategory::validation, "no reference rows available for prediction");
    // Ties at the k-boundary resolve to the lower reference row index.
    std::partial_sort(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(k), dists.end());

    CategoryPrediction pred;
    pred.probabilities.assign(categories_.size(), 0.0);
    for (std::size_t i = 0; i < k; ++i) pred.probabilities[labels_[dists[i].second]] += 1.0;
    for (double& p : pred.probabilities) p /= static_cast<double>(k);

    pred.predicted = 0;
    double best = pred.probabilities[0];
    double entropy = 0.0;
    for (std::size_t m = 0; m < pred.probabilities.size(); ++m) {
        const double p = pred.probabilities[m];
        if (p > best) {
            best = p;
            pred.predicted = m;
        }
        if (p > 0.0) entropy -= p * std::log(p);
    }
    pred.entropy = std::max(entropy, 0.0);
    return pred;
}

CategoryPrediction KnnRouter::predict(std::span<const float> embedding) const {
    return predict_excluding(embedding, -1);
}

CategoryPrediction KnnRouter::predict_robust(std::span<const float> embedding,
                                             double epsilon_t) const {
    if (!categories_.has_general())
        fail(ErrorCategory::validation, "category set has no 'general' category");
    if (epsilon_t < 0) fail(ErrorCategory::validation, "epsilon_t must be >= 0");
    CategoryPrediction pred = predict(embedding);
    if (pred.entropy > epsilon_t) pred.predicted = *categories_.general_index;
    return pred;
}

std::map<int, std::pair<double, double>> sweep_k(const AlignedCorpus& train,
                                                 const AlignedCorpus& val,
                                                 std::span<const int> ks, Distance distance,
                                                 const CategorySet& categories) {
    std::map<int, std::pair<double, double>> result;
    for (int k : ks) {
        KnnRouter router = KnnRouter::from_corpus(train, k, distance, categories);

        std::vector<std::size_t> want_train(train.size());
        for (std::size_t i = 0; i < train.size(); ++i)
            want_train[i] = *categories.index_of(*train.prompts[i].category);
        std::vector<unsigned char> hit_train(train.size(), 0);
        parallel_for(train.size(), [&](std::size_t i) {
            auto pred = router.predict_excluding(train.embeddings.row(i),
                                                 static_cast<std::ptrdiff_t>(i));
            hit_train[i] = pred.predicted == want_train[i];
        });

        std::vector<std::size_t> want_val(val.size());
        for (std::size_t i = 0; i < val.size(); ++i)
            want_val[i] = *categories.index_of(*val.prompts[i].category);
        std::vector<unsigned char> hit_val(val.size(), 0);
        parallel_for(val.size(), [&](std::size_t i) {
            hit_val[i] = router.predict(val.embeddings.row(i)).predicted == want_val[i];
        });

        auto frac = [](const std::vector<unsigned char>& hits) {
            if (hits.empty()) return 0.0;
            std::size_t n = 0;
            for (auto h : hits) n += h;
            return static_cast<double>(n) / static_cast<double>(hits.size());
        };
        result[k] = {frac(hit_train), frac(hit_val)};
    }
    return result;
}

RouterEvalReport evaluate(const KnnRouter& router, const AlignedCorpus& test) {
    if (test.size() == 0) fail(ErrorCategory::validation, "empty test set");
    const auto& categories = router.categories();
    RouterEvalReport report;
    report.confusion.assign(categories.size(), std::vector<std::size_t>(categories.size(), 0));

    std::vector<std::size_t> predicted(test.size());
    parallel_for(test.size(), [&](std::size_t i) {
        predicted[i] = router.predict(test.embeddings.row(i)).predicted;
    });

    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const auto& p = test.prompts[i];
        if (!p.category)
            fail(ErrorCategory::validation, "test prompt '" + p.id + "' has no category label");
        auto actual = categories.index_of(*p.category);
        if (!actual)
            fail(ErrorCategory::validation,
                 "test prompt '" + p.id + "' labeled with unknown category '" + *p.category + "'");
        report.confusion[*actual][predicted[i]]++;
        if (*actual == predicted[i]) ++correct;
    }
    report.accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
    return report;
}

// --- persistence -------------------------------------------------------------

void save_router(const KnnRouter& router, const std::filesystem::path& dir,
                 std::optional<double> epsilon_t) {
    std::filesystem::create_directories(dir);
    save_embeddings(router.reference(), dir / "reference.emb");

    std::ofstream labels(dir / "labels.tsv");
    if (!labels) fail(ErrorCategory::io, "cannot write " + (dir / "labels.tsv").string());
    for (std::size_t i = 0; i < router.reference().rows(); ++i)
        labels << router.reference().ids()[i] << '\t'
               << router.categories().name_of(router.labels()[i]) << '\n';
    if (!labels) fail(ErrorCategory::io, "write failed for " + (dir / "labels.tsv").string());

    json config{{"k", router.k()},
                {"distance", to_string(router.distance())},
                {"categories", router.categories().names}};
    if (epsilon_t) config["epsilon_t"] = *epsilon_t;
    std::ofstream out(dir / "router.json");
    if (!out) fail(ErrorCategory::io, "cannot write " + (dir / "router.json").string());
    out << config.dump(2) << '\n';
    if (!out) fail(ErrorCategory::io, "write failed for " + (dir / "router.json").string());
}

SavedRouter load_router(const std::filesystem::path& dir) {
    std::ifstream in(dir / "router.json");
    if (!in) fail(ErrorCategory::io, "cannot open " + (dir / "router.json").string());
    json config = json::parse(in, nullptr, false);
    if (config.is_discarded())
        fail(ErrorCategory::format, "malformed router config " + (dir / "router.json").string());

    CategorySet categories =
        CategorySet::from_names(config.at("categories").get<std::vector<std::string>>());
    EmbeddingMatrix reference = load_embeddings(dir / "reference.emb");

    std::ifstream labels_in(dir / "labels.tsv");
    if (!labels_in) fail(ErrorCategory::io, "cannot open " + (dir / "labels.tsv").string());
    std::unordered_map<std::string, std::size_t> by_id;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(labels_in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            fail(ErrorCategory::format,
                 (dir / "labels.tsv").string() + ":" + std::to_string(lineno) + ": expected id<TAB>category");
        const std::string id = line.substr(0, tab);
        const std::string name = line.substr(tab + 1);
        auto idx = categories.index_of(name);
        if (!idx)
            fail(ErrorCategory::format, (dir / "labels.tsv").string() + ":" + std::to_string(lineno) +
                                            ": unknown category '" + name + "'");
        by_id[id] = *idx;
    }
    std::vector<std::size_t> labels;
    labels.reserve(reference.rows());
    for (const auto& id : reference.ids()) {
        auto it = by_id.find(id);
        if (it == by_id.end())
            fail(ErrorCategory::validation, "no label for reference id '" + id + "'");
        labels.push_back(it->second);
    }

    SavedRouter saved{KnnRouter(std::move(reference), std::move(labels),
                                config.at("k").get<int>(),
                                parse_distance(config.at("distance").get<std::string>()),
                                std::move(categories)),
                      std::nullopt};
    if (config.contains("epsilon_t")) saved.epsilon_t = config["epsilon_t"].get<double>();
    return saved;
}

}  // namespace coe
