// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion is self-contained and pins its own tolerances.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "coe/assignment.hpp"
#include "coe/corpus.hpp"
#include "coe/gateway.hpp"
#include "coe/pipeline.hpp"
#include "coe/router.hpp"
#include "coe/routing.hpp"
#include "coe/servesim.hpp"
#include "coe/winrate.hpp"
#include "reference_lru.hpp"
#include "test_support.hpp"

using namespace coe;
using coe::testing::make_clusters;
using coe::testing::ReferenceLruSim;
using coe::testing::TempDir;
using nlohmann::json;

namespace {

int g_failures = 0;

void report(int number, const std::string& name, bool pass, const std::string& detail = "") {
    std::printf("[%2d] %s  %s%s%s\n", number, pass ? "PASS" : "FAIL", name.c_str(),
                detail.empty() ? "" : ": ", detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------- criterion 1

MilpInstance random_instance(std::mt19937& rng, std::size_t max_m, std::size_t max_k) {
    std::uniform_int_distribution<std::size_t> msize(1, max_m), ksize(1, max_k);
    std::uniform_real_distribution<double> loss(-1.0, 0.0), size(1.0, 100.0);
    MilpInstance inst;
    const std::size_t M = msize(rng), K = ksize(rng);
    inst.loss.assign(M, std::vector<double>(K));
    for (auto& row : inst.loss)
        for (auto& v : row) v = loss(rng);
    inst.sizes.resize(K);
    double total = 0, smallest = 1e300;
    for (auto& s : inst.sizes) {
        s = size(rng);
        total += s;
        smallest = std::min(smallest, s);
    }
    std::uniform_real_distribution<double> budget(smallest, total * 1.05);
    inst.budget = budget(rng);
    return inst;
}

void criterion_milp_oracle() {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937 rng(2024);
    std::size_t checked = 0;
    bool pass = true;
    std::string detail;
    for (int trial = 0; trial < 220 && pass; ++trial) {
        auto inst = random_instance(rng, 8, 6);
        auto fast = solve(inst);
        auto oracle = solve_exhaustive(inst);
        if (fast.objective != oracle.objective || fast.y != oracle.y ||
            fast.category_to_expert != oracle.category_to_expert) {
            pass = false;
            detail = "divergence at instance " + std::to_string(trial);
        }
        ++checked;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (pass && seconds >= 10.0) {
        pass = false;
        detail = "runtime " + fmt(seconds) + " s exceeds 10 s";
    }
    if (pass) detail = std::to_string(checked) + " instances, " + fmt(seconds) + " s";
    report(1, "MILP oracle equivalence (solve == exhaustive, exact)", pass, detail);
}

// ---------------------------------------------------------------- criterion 2

void criterion_standard_form() {
    std::mt19937 rng(2025);
    std::uniform_int_distribution<std::size_t> shape(1, 4);
    std::uniform_real_distribution<double> loss(-1.0, 0.0), size(1.0, 100.0);
    std::uint64_t points = 0;
    bool pass = true;
    for (int trial = 0; trial < 20 && pass; ++trial) {
        MilpInstance inst;
        const std::size_t M = shape(rng), K = shape(rng);
        inst.loss.assign(M, std::vector<double>(K));
        for (auto& row : inst.loss)
            for (auto& v : row) v = loss(rng);
        inst.sizes.resize(K);
        double total = 0;
        for (auto& s : inst.sizes) {
            s = size(rng);
            total += s;
        }
        std::uniform_real_distribution<double> budget(1.0, total);
        inst.budget = budget(rng);

        auto form = build_standard_form(inst);
        const std::size_t bits = M * K + K;
        std::vector<std::uint8_t> x(bits);
        for (std::uint64_t point = 0; point < (std::uint64_t{1} << bits); ++point) {
            for (std::size_t b = 0; b < bits; ++b) x[b] = (point >> b) & 1;
            // structured Eq-5-style check, written directly
            bool structured = true;
            double used = 0;
            for (std::size_t j = 0; j < K && structured; ++j) {
                std::size_t column = 0;
                for (std::size_t i = 0; i < M; ++i) column += x[j * M + i];
                const bool y = x[M * K + j];
                if (y) used += inst.sizes[j];
                if (column > (y ? M : std::size_t{0})) structured = false;  // C'1 <= M y
                if ((y ? 1u : 0u) > column) structured = false;             // y <= C'1
            }
            for (std::size_t i = 0; i < M && structured; ++i) {
                std::size_t row = 0;
                for (std::size_t j = 0; j < K; ++j) row += x[j * M + i];
                if (row != 1) structured = false;
            }
            if (structured && used > inst.budget) structured = false;
            if (standard_form_feasible(form, x) != structured) {
                pass = false;
                break;
            }
            ++points;
        }
    }
    report(2, "Standard-form fidelity (exhaustive binary points)", pass,
           pass ? std::to_string(points) + " points over 20 instances" : "feasibility mismatch");
}

// ---------------------------------------------------------------- criterion 3

void criterion_budget_monotonicity() {
    std::mt19937 rng(2026);
    bool pass = true;
    std::string detail;
    for (int trial = 0; trial < 40 && pass; ++trial) {
        auto inst = random_instance(rng, 8, 6);
        double total = std::accumulate(inst.sizes.begin(), inst.sizes.end(), 0.0);
        std::vector<double> budgets;
        for (double f : {0.2, 0.4, 0.6, 0.8, 1.0, 1.2}) budgets.push_back(total * f);
        std::sort(budgets.begin(), budgets.end());
        auto entries = budget_sweep(inst.loss, inst.sizes, budgets);
        double prev = 1e300;
        for (const auto& entry : entries) {
            if (!entry.solution) continue;
            if (entry.solution->objective > prev) {
                pass = false;
                detail = "objective increased along the sweep";
            }
            prev = entry.solution->objective;
        }
        double unconstrained = 0;
        for (const auto& row : inst.loss)
            unconstrained += *std::min_element(row.begin(), row.end());
        if (!entries.back().solution ||
            entries.back().solution->objective != unconstrained) {
            pass = false;
            detail = "unconstrained optimum != sum of row minima";
        }
    }
    report(3, "Budget monotonicity and exact unconstrained optimum", pass, detail);
}

// ---------------------------------------------------------------- criterion 4

void criterion_serving_arithmetic() {
    const double slow_ms = copy_time_sec(8, 2, gib_per_sec(64)) * 1000.0;
    const double fast_ms = copy_time_sec(8, 2, gib_per_sec(800)) * 1000.0;
    const bool pass = std::abs(slow_ms - 233.0) <= 1.0 && std::abs(fast_ms - 19.0) <= 1.0;
    report(4, "Serving arithmetic (233 ms / 19 ms expert copy)", pass,
           fmt(slow_ms) + " ms and " + fmt(fast_ms) + " ms");
}

// ---------------------------------------------------------------- criterion 5

void criterion_table_averages() {
    struct Row {
        const char* name;
        std::vector<double> scores;
        double published;
    };
    const std::vector<Row> rows = {
        {"Qwen2-7B-Instruct", {0.780, 0.648, 0.512, 0.448, 0.581, 0.465, 0.299, 0.419}, 0.519},
        {"gemma-2-9b-it", {0.816, 0.768, 0.523, 0.487, 0.643, 0.592, 0.346, 0.441}, 0.577},
        {"gemma-2-27b-it", {0.844, 0.785, 0.556, 0.597, 0.699, 0.647, 0.415, 0.507}, 0.631},
        {"Llama-3.1-70B-Instruct",
         {0.924, 0.779, 0.618, 0.629, 0.738, 0.657, 0.458, 0.547},
         0.669},
        {"Qwen2-72B-Instruct", {0.901, 0.813, 0.637, 0.639, 0.763, 0.667, 0.423, 0.620}, 0.683},
        {"CoE 7B", {0.780, 0.648, 0.512, 0.448, 0.581, 0.465, 0.299, 0.419}, 0.519},
        {"CoE 16B", {0.780, 0.695, 0.522, 0.463, 0.643, 0.459, 0.344, 0.419}, 0.541},
        {"CoE 35B", {0.844, 0.739, 0.448, 0.568, 0.522, 0.505, 0.415, 0.507}, 0.569},
        {"CoE 105B", {0.780, 0.726, 0.556, 0.514, 0.700, 0.664, 0.415, 0.419}, 0.597},
        {"CoE 190B", {0.901, 0.781, 0.447, 0.604, 0.523, 0.664, 0.415, 0.620}, 0.619},
        {"Robust CoE 7B", {0.780, 0.648, 0.512, 0.448, 0.581, 0.465, 0.299, 0.419}, 0.519},
        {"Robust CoE 16B", {0.780, 0.767, 0.523, 0.487, 0.643, 0.577, 0.344, 0.423}, 0.568},
        {"Robust CoE 35B", {0.844, 0.785, 0.556, 0.597, 0.699, 0.624, 0.415, 0.507}, 0.628},
        {"Robust CoE 105B", {0.844, 0.785, 0.556, 0.597, 0.699, 0.637, 0.415, 0.507}, 0.630},
        {"Robust CoE 190B", {0.901, 0.781, 0.618, 0.626, 0.738, 0.664, 0.422, 0.620}, 0.671},
    };
    bool pass = true;
    std::string detail = std::to_string(rows.size()) + " rows";
    for (const auto& row : rows) {
        const double mean = aggregate_scores(row.scores);
        if (std::abs(mean - row.published) > 0.001) {
            pass = false;
            detail = std::string(row.name) + ": " + fmt(mean) + " vs " + fmt(row.published);
            break;
        }
    }
    report(5, "Knowledge-table average reproduction (+-0.001, 15 rows)", pass, detail);
}

// ---------------------------------------------------------------- criterion 6

void criterion_router_properties() {
    bool pass = true;
    std::string detail;

    // property sweep on an overlapping 5-category world
    auto fuzzy = make_clusters(5, 40, 8, 0.5, 3001);
    auto robust_cats = fuzzy.categories.with_general();
    auto router = KnnRouter::from_corpus(fuzzy.corpus, 15, Distance::cosine, robust_cats);
    std::mt19937 rng(3002);
    std::normal_distribution<float> n(0.0f, 1.0f);
    std::uniform_real_distribution<double> eps(0.0, std::log(5.0));
    for (int q = 0; q < 500 && pass; ++q) {
        std::vector<float> query(8);
        for (auto& v : query) v = n(rng);
        auto pred = router.predict(query);
        const double sum =
            std::accumulate(pred.probabilities.begin(), pred.probabilities.end(), 0.0);
        if (std::abs(sum - 1.0) > 1e-9) { pass = false; detail = "normalization"; }
        if (pred.entropy < 0.0 || pred.entropy > std::log(double(robust_cats.size())) + 1e-12) {
            pass = false;
            detail = "entropy bounds";
        }
        // strict-threshold iff semantics
        double e1 = eps(rng), e2 = eps(rng);
        if (e1 > e2) std::swap(e1, e2);
        auto r1 = router.predict_robust(query, e1);
        auto r2 = router.predict_robust(query, e2);
        const auto general = *robust_cats.general_index;
        if ((pred.entropy > e1) != (r1.predicted == general && pred.predicted != general)) {
            // the base prediction itself can be general only with labeled
            // general rows; none exist here, so the iff must be exact
            pass = false;
            detail = "threshold iff";
        }
        if (r2.predicted == general && r1.predicted != general) {
            pass = false;
            detail = "epsilon monotonicity";
        }
        if (router.predict_robust(query, std::numeric_limits<double>::infinity()).predicted !=
            pred.predicted) {
            pass = false;
            detail = "infinite threshold";
        }
    }

    // permutation invariance on a separate world
    if (pass) {
        auto data = make_clusters(3, 40, 6, 0.4, 3003);
        auto base = KnnRouter::from_corpus(data.corpus, 9, Distance::cosine, data.categories);
        std::vector<std::size_t> perm(data.corpus.size());
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        AlignedCorpus shuffled;
        std::vector<std::string> ids;
        std::vector<float> flat;
        for (std::size_t i : perm) {
            shuffled.prompts.push_back(data.corpus.prompts[i]);
            ids.push_back(data.corpus.prompts[i].id);
            auto row = data.corpus.embeddings.row(i);
            flat.insert(flat.end(), row.begin(), row.end());
        }
        shuffled.embeddings = EmbeddingMatrix(std::move(ids), 6, std::move(flat));
        auto permuted = KnnRouter::from_corpus(shuffled, 9, Distance::cosine, data.categories);
        for (int q = 0; q < 200 && pass; ++q) {
            std::vector<float> query(6);
            for (auto& v : query) v = n(rng);
            auto a = base.predict(query);
            auto b = permuted.predict(query);
            for (std::size_t c = 0; c < a.probabilities.size(); ++c)
                if (std::abs(a.probabilities[c] - b.probabilities[c]) > 1e-12) {
                    pass = false;
                    detail = "permutation invariance";
                }
            if (a.predicted != b.predicted) { pass = false; detail = "permutation argmax"; }
        }
    }

    // 13-category accuracy bar
    double accuracy = 0.0;
    if (pass) {
        auto data = make_clusters(13, 200, 16, 0.02, 3004);
        auto train = filter_split(data.corpus, Split::train);
        auto test = filter_split(data.corpus, Split::test);
        auto cr = KnnRouter::from_corpus(train, 30, Distance::cosine, data.categories);
        accuracy = evaluate(cr, test).accuracy;
        if (accuracy < 0.98) {
            pass = false;
            detail = "held-out accuracy " + fmt(accuracy);
        }
    }
    if (pass) detail = "13-category held-out accuracy " + fmt(accuracy);
    report(6, "Router property suite and 98% synthetic accuracy", pass, detail);
}

// ---------------------------------------------------------------- criterion 7

void criterion_pipeline_properties() {
    auto seed_world = make_clusters(3, 60, 6, 0.05, 3101);
    // unlabeled pool: a blend of in-cluster and scattered points
    std::mt19937 rng(3102);
    std::normal_distribution<float> noise(0.0f, 0.35f);
    std::vector<std::string> ids;
    std::vector<float> flat;
    AlignedCorpus pool;
    for (int i = 0; i < 400; ++i) {
        ids.push_back("pool" + std::to_string(i));
        auto center = coe::testing::cluster_center(seed_world, i % 3);
        for (float c : center) flat.push_back(c + noise(rng));
        pool.prompts.push_back({ids.back(), "x", std::nullopt, std::nullopt});
    }
    pool.embeddings = EmbeddingMatrix(std::move(ids), 6, std::move(flat));

    // entropies are fixed per point; 1000 random thresholds exercise the
    // partition and monotone-filter properties
    auto base = label_corpus(seed_world.corpus, seed_world.categories, pool,
                             {std::log(3.0) + 1.0, 10, Distance::cosine});
    std::map<std::string, double> entropy_of;
    for (const auto& a : base.accepted) entropy_of[a.id] = a.entropy;

    std::uniform_real_distribution<double> thresholds(0.0, std::log(3.0));
    bool pass = base.rejected.empty();  // threshold above ln M accepts everything
    std::string detail = pass ? "" : "threshold above ln M still rejected points";
    for (int trial = 0; trial < 1000 && pass; ++trial) {
        double t1 = thresholds(rng), t2 = thresholds(rng);
        if (t1 > t2) std::swap(t1, t2);
        auto low = label_corpus(seed_world.corpus, seed_world.categories, pool,
                                {t1, 10, Distance::cosine});
        auto high = label_corpus(seed_world.corpus, seed_world.categories, pool,
                                 {t2, 10, Distance::cosine});
        if (low.accepted.size() + low.rejected.size() != pool.size() ||
            high.accepted.size() + high.rejected.size() != pool.size()) {
            pass = false;
            detail = "partition violated";
            break;
        }
        if (low.accepted.size() > high.accepted.size()) {
            pass = false;
            detail = "monotone filtering violated";
            break;
        }
        for (const auto& a : low.accepted)
            if (a.entropy > t1 || std::abs(entropy_of.at(a.id) - a.entropy) > 0) {
                pass = false;
                detail = "entropy changed between runs";
                break;
            }
        std::set<std::string> high_ids;
        for (const auto& a : high.accepted) high_ids.insert(a.id);
        for (const auto& a : low.accepted)
            if (!high_ids.count(a.id)) {
                pass = false;
                detail = "accepted set not nested";
                break;
            }
    }

    if (pass) {
        std::vector<std::string> tr{"Could you convert {query} from {in-lang} to {out-lang}?"};
        std::vector<TranslationRow> tr_rows{{"hello", "English", "Arabic"}};
        auto a = expand_translation_templates(tr, tr_rows);
        std::vector<std::string> xl{"Please write your response in {lang} to: {query}"};
        std::vector<CrossLingualRow> xl_rows{{"How are you?", "Thai"}};
        auto b = expand_crosslingual_templates(xl, xl_rows);
        if (a.size() != 1 || a[0].text != "Could you convert hello from English to Arabic?") {
            pass = false;
            detail = "translation template rendering";
        } else if (b.size() != 1 ||
                   b[0].text != "Please write your response in Thai to: How are you?") {
            pass = false;
            detail = "cross-lingual template rendering";
        }
    }
    report(7, "Pipeline partition/monotone filter (1000 trials) + template renderings", pass,
           detail);
}

// ---------------------------------------------------------------- criterion 8

void criterion_winrate_recovery() {
    const double probs[3][2] = {{0.9, 0.2}, {0.55, 0.7}, {0.05, 0.95}};
    auto categories = CategorySet::from_names({"a", "b", "c"});
    auto catalog = ExpertCatalog::from_experts({{"e0", 1}, {"e1", 2}});
    std::vector<PromptRecord> prompts{{"p0", "t", std::nullopt, std::nullopt},
                                      {"p1", "t", std::nullopt, std::nullopt},
                                      {"p2", "t", std::nullopt, std::nullopt}};
    std::vector<std::vector<std::string>> partition{{"p0"}, {"p1"}, {"p2"}};
    std::mt19937 rng(3201);
    std::vector<JudgmentRecord> judgments;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t e = 0; e < 2; ++e) {
            std::bernoulli_distribution win(probs[c][e]);
            for (int i = 0; i < 10000; ++i)
                judgments.push_back({"p" + std::to_string(c), catalog.at(e).name,
                                     win(rng) ? Verdict::win : Verdict::loss});
        }
    auto build = build_loss_matrix(partition, judgments, catalog, categories);
    bool pass = true;
    double worst = 0;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t e = 0; e < 2; ++e) {
            const double err = std::abs(-build.matrix.values[c][e] - probs[c][e]);
            worst = std::max(worst, err);
            if (err > 0.02 || build.matrix.counts[c][e] != 10000) pass = false;
        }
    report(8, "Win-rate recovery (+-0.02 at 10000 verdicts/cell)", pass,
           "max error " + fmt(worst));
}

// ---------------------------------------------------------------- criterion 9

void criterion_simulator_oracle() {
    auto catalog = ExpertCatalog::from_experts(
        {{"e7", 7}, {"e9", 9}, {"e27", 27}, {"e70", 70}, {"e72", 72}});
    std::mt19937 rng(3301);
    std::discrete_distribution<std::size_t> pick({45, 25, 15, 9, 6});
    std::uniform_real_distribution<double> gap(0.0, 0.05);
    std::uniform_int_distribution<std::uint64_t> tokens(1, 400);
    bool pass = true;
    std::string detail;

    for (int round = 0; round < 50 && pass; ++round) {
        std::vector<TraceEvent> trace;
        double t = 0;
        for (int i = 0; i < 120; ++i) {
            t += gap(rng);
            trace.push_back({t, pick(rng), tokens(rng)});
        }
        MemoryConfig config;
        config.hbm_capacity_bytes =
            static_cast<std::uint64_t>((140.0 + 20.0 * (round % 4)) * kGiB);
        config.ddr_bandwidth_bytes_per_sec = gib_per_sec(round % 2 == 0 ? 64 : 800);
        config.per_token_latency_sec = default_token_latencies(catalog);
        auto report_ = simulate(trace, config, catalog);
        auto reference = ReferenceLruSim{}.run(trace, config, catalog);
        for (std::size_t i = 0; i < trace.size(); ++i) {
            const auto& a = report_.per_request[i];
            const auto& b = reference[i];
            if (a.hbm_hit != b.hit || a.queue_wait != b.queue_wait ||
                a.copy_time != b.copy_time || a.generation_time != b.generation_time ||
                a.completion_time != b.completion_time) {
                pass = false;
                detail = "event mismatch at round " + std::to_string(round) + ", request " +
                         std::to_string(i);
                break;
            }
        }
    }

    if (pass) {
        // all-miss round robin: every expert evicted before reuse
        std::vector<TraceEvent> trace;
        for (int i = 0; i < 40; ++i) trace.push_back({i * 0.001, std::size_t(i % 5), 25});
        MemoryConfig slow, fast;
        slow.hbm_capacity_bytes = fast.hbm_capacity_bytes =
            static_cast<std::uint64_t>(135.0 * kGiB);
        slow.ddr_bandwidth_bytes_per_sec = gib_per_sec(64);
        fast.ddr_bandwidth_bytes_per_sec = gib_per_sec(800);
        slow.per_token_latency_sec = fast.per_token_latency_sec =
            default_token_latencies(catalog);
        auto cmp = gpu_vs_tiered_report(trace, slow, fast, catalog);
        if (cmp.gpu.hbm_hit_rate != 0.0 || cmp.tiered.hbm_hit_rate != 0.0) {
            pass = false;
            detail = "trace was not all-miss";
        } else if (cmp.copy_ratio != 12.5) {
            pass = false;
            detail = "copy ratio " + fmt(cmp.copy_ratio) + " != 12.5";
        } else {
            detail = "50 traces event-for-event; all-miss copy ratio exactly 12.5";
        }
    }
    report(9, "Simulator oracle equality and exact 12.5 copy ratio", pass, detail);
}

// --------------------------------------------------------------- criterion 10

struct GatewayWorld {
    TempDir dir;
    coe::testing::ClusteredCorpus data;
    std::shared_ptr<const KnnRouter> router;
    ExpertCatalog catalog;
    RoutingTable table_a;
    RoutingTable table_b;

    GatewayWorld() : data(make_clusters(3, 40, 8, 0.05, 3401)) {
        router = std::make_shared<const KnnRouter>(
            KnnRouter::from_corpus(data.corpus, 10, Distance::cosine, data.categories));
        catalog = ExpertCatalog::from_experts({{"alpha", 7}, {"beta", 27}, {"gamma", 70}});
        AssignmentSolution a;
        a.category_to_expert = {0, 1, 2};
        a.y = {1, 1, 1};
        a.selected_experts = {0, 1, 2};
        table_a = build_routing_table(router, catalog, a, std::nullopt);
        AssignmentSolution b;
        b.category_to_expert = {2, 0, 1};
        b.y = {1, 1, 1};
        b.selected_experts = {0, 1, 2};
        table_b = build_routing_table(router, catalog, b, std::nullopt);

        save_router(*router, dir.path() / "router");
        save_catalog(catalog, dir.file("experts.json"));
        save_routing_table(table_a, dir.file("table_a.json"), "router", "experts.json");
        save_routing_table(table_b, dir.file("table_b.json"), "router", "experts.json");
    }
};

void criterion_gateway_parity() {
    GatewayWorld w;
    GatewayConfig config;
    config.routing_table_path = w.dir.file("table_a.json");
    config.request_timeout_sec = 10.0;
    Gateway gateway(config, w.table_a);
    const int port = gateway.start();

    bool pass = true;
    std::string detail;

    // 1000 randomized pre-embedded requests: bit-identical to offline route
    {
        std::mt19937 rng(3402);
        std::normal_distribution<float> n(0.0f, 0.7f);
        httplib::Client client("127.0.0.1", port);
        for (int q = 0; q < 1000 && pass; ++q) {
            std::vector<float> query(8);
            for (auto& v : query) v = n(rng);
            auto offline = route(w.table_a, query, "q");
            auto res = client.Post("/route", json{{"embedding", query}, {"prompt_id", "q"}}.dump(),
                                   "application/json");
            if (!res || res->status != 200) {
                pass = false;
                detail = "request failed at " + std::to_string(q);
                break;
            }
            auto body = json::parse(res->body);
            if (body["expert_index"].get<std::size_t>() != offline.expert ||
                body["category_index"].get<std::size_t>() != offline.category ||
                body["entropy"].get<double>() != offline.entropy) {
                pass = false;
                detail = "decision mismatch at request " + std::to_string(q);
                break;
            }
        }
    }

    // hot reload under concurrent load: every decision matches table A or B
    if (pass) {
        constexpr int kProbes = 16;
        std::vector<std::vector<float>> probes;
        std::vector<RoutingDecision> want_a, want_b;
        std::mt19937 rng(3403);
        std::normal_distribution<float> n(0.0f, 0.7f);
        for (int i = 0; i < kProbes; ++i) {
            std::vector<float> query(8);
            for (auto& v : query) v = n(rng);
            want_a.push_back(route(w.table_a, query));
            want_b.push_back(route(w.table_b, query));
            probes.push_back(std::move(query));
        }

        std::atomic<bool> stop_load{false};
        std::atomic<int> inconsistent{0};
        std::atomic<int> served{0};
        auto worker = [&] {
            httplib::Client client("127.0.0.1", port);
            std::mt19937 wrng(std::random_device{}());
            std::uniform_int_distribution<int> pick(0, kProbes - 1);
            while (!stop_load.load()) {
                const int i = pick(wrng);
                auto res = client.Post("/route", json{{"embedding", probes[i]}}.dump(),
                                       "application/json");
                if (!res || res->status != 200) {
                    ++inconsistent;
                    continue;
                }
                auto body = json::parse(res->body);
                const auto expert = body["expert_index"].get<std::size_t>();
                const auto category = body["category_index"].get<std::size_t>();
                const bool matches_a =
                    expert == want_a[i].expert && category == want_a[i].category;
                const bool matches_b =
                    expert == want_b[i].expert && category == want_b[i].category;
                if (!matches_a && !matches_b) ++inconsistent;
                ++served;
            }
        };
        std::vector<std::thread> workers;
        for (int t = 0; t < 3; ++t) workers.emplace_back(worker);

        httplib::Client admin("127.0.0.1", port);
        for (int swap = 0; swap < 20; ++swap) {
            const auto& path = swap % 2 == 0 ? "table_b.json" : "table_a.json";
            auto res = admin.Post("/admin/reload",
                                  json{{"table", w.dir.file(path).string()}}.dump(),
                                  "application/json");
            if (!res || res->status != 200) {
                pass = false;
                detail = "reload failed";
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(15));
        }
        stop_load = true;
        for (auto& t : workers) t.join();
        if (inconsistent.load() > 0) {
            pass = false;
            detail = std::to_string(inconsistent.load()) + " inconsistent decisions";
        } else if (pass) {
            detail = "1000 parity requests; " + std::to_string(served.load()) +
                     " decisions under 20 hot swaps, all consistent";
        }
    }
    gateway.stop();
    report(10, "Gateway/offline parity and atomic hot reload", pass, detail);
}

// --------------------------------------------------------------- criterion 11

void criterion_end_to_end() {
    std::printf(
        "     note: the published headline results for this kind of system (Arena-Hard\n"
        "     59.4 at 31B average active parameters; MT-Bench 9.06 at 54B) require the\n"
        "     five real expert LLMs plus GPT-4o-class judges and are not reproducible at\n"
        "     desk scale. This suite substitutes property and oracle checks plus the\n"
        "     synthetic end-to-end run below.\n");

    // synthetic world where each category has a dominant specialist
    const std::size_t M = 5;
    auto data = make_clusters(M, 150, 16, 0.02, 3501);
    auto catalog = ExpertCatalog::from_experts({{"expert-7b", 7},
                                                {"expert-9b", 9},
                                                {"expert-27b", 27},
                                                {"expert-70b", 70},
                                                {"expert-72b", 72}});
    const double specialist = 0.9, generalist = 0.3;

    auto train = filter_split(data.corpus, Split::train);
    auto val = filter_split(data.corpus, Split::val);
    auto test = filter_split(data.corpus, Split::test);

    // verdicts for every (prompt, expert) pair, specialist-skewed
    std::mt19937 rng(3502);
    std::vector<JudgmentRecord> judgments;
    auto emit_verdicts = [&](const AlignedCorpus& corpus) {
        for (const auto& p : corpus.prompts) {
            const std::size_t m = *data.categories.index_of(*p.category);
            for (std::size_t j = 0; j < catalog.size(); ++j) {
                std::bernoulli_distribution win(j == m ? specialist : generalist);
                judgments.push_back(
                    {p.id, catalog.at(j).name, win(rng) ? Verdict::win : Verdict::loss});
            }
        }
    };
    emit_verdicts(train);
    emit_verdicts(val);
    emit_verdicts(test);

    // step 1: category router
    auto router = std::make_shared<const KnnRouter>(
        KnnRouter::from_corpus(train, 10, Distance::cosine, data.categories));

    // step 2: loss matrix from routed training prompts, then the MILP
    std::vector<std::pair<std::string, std::size_t>> decided;
    for (std::size_t i = 0; i < train.size(); ++i)
        decided.emplace_back(train.prompts[i].id,
                             router->predict(train.embeddings.row(i)).predicted);
    for (std::size_t i = 0; i < val.size(); ++i)
        decided.emplace_back(val.prompts[i].id,
                             router->predict(val.embeddings.row(i)).predicted);
    std::vector<PromptRecord> known;
    known.insert(known.end(), train.prompts.begin(), train.prompts.end());
    known.insert(known.end(), val.prompts.begin(), val.prompts.end());
    auto partition = partition_by_category(decided, known, data.categories);
    auto build = build_loss_matrix(partition, judgments, catalog, data.categories);

    auto solution = solve({build.matrix.values, catalog.sizes_billions(), 190.0});
    auto table = build_routing_table(router, catalog, solution, std::nullopt);

    // route the held-out split and measure
    std::vector<RoutingDecision> decisions;
    for (std::size_t i = 0; i < test.size(); ++i)
        decisions.push_back(route(table, test.embeddings.row(i), test.prompts[i].id));

    const double active = average_active_params(decisions);
    const double coe_winrate = evaluate_winrate(decisions, judgments, catalog);

    // every monolithic expert's win-rate over the same held-out prompts
    double best_single = 0.0;
    for (std::size_t j = 0; j < catalog.size(); ++j) {
        std::vector<RoutingDecision> single;
        for (const auto& p : test.prompts) {
            RoutingDecision d;
            d.prompt_id = p.id;
            d.expert = j;
            d.expert_params_billions = catalog.at(j).params_billions;
            single.push_back(std::move(d));
        }
        best_single = std::max(best_single, evaluate_winrate(single, judgments, catalog));
    }

    const double largest = 72.0;
    const bool pass = active < largest && coe_winrate > best_single;
    report(11, "Synthetic end-to-end: cheaper than the largest expert, stronger than any single",
           pass,
           "active " + fmt(active) + "B < " + fmt(largest) + "B; win-rate " + fmt(coe_winrate) +
               " > best single " + fmt(best_single));
}

}  // namespace

int main() {
    std::printf("CoE acceptance suite\n");
    criterion_milp_oracle();
    criterion_standard_form();
    criterion_budget_monotonicity();
    criterion_serving_arithmetic();
    criterion_table_averages();
    criterion_router_properties();
    criterion_pipeline_properties();
    criterion_winrate_recovery();
    criterion_simulator_oracle();
    criterion_gateway_parity();
    criterion_end_to_end();
    if (g_failures > 0) {
        std::printf("%d criterion(s) failed\n", g_failures);
        return 1;
    }
    std::printf("all criteria passed\n");
    return 0;
}
