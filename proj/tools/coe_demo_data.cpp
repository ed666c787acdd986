// Generates a small synthetic dataset (prompts, embeddings, experts,
// verdicts, a serving trace) so the full pipeline can run without any
// external embedding model or judge.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coe/corpus.hpp"
#include "coe/servesim.hpp"

using namespace coe;

int main(int argc, char** argv) {
    CLI::App app{"Synthetic demo dataset for the CoE toolkit"};
    std::string out_dir = "demo";
    std::size_t per_category = 120;
    std::uint32_t dim = 16;
    std::uint64_t seed = 7;
    app.add_option("--out", out_dir);
    app.add_option("--per-category", per_category);
    app.add_option("--dim", dim);
    app.add_option("--seed", seed);
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::string> categories{"medical", "finance", "coding", "math", "law"};
    auto catalog = ExpertCatalog::from_experts({{"expert-7b", 7},
                                                {"expert-9b", 9},
                                                {"expert-27b", 27},
                                                {"expert-70b", 70},
                                                {"expert-72b", 72}});
    // expert j is the specialist for category j
    const double specialist_win = 0.92, generalist_win = 0.35;

    std::filesystem::create_directories(out_dir);
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.0f, 0.02f);
    std::bernoulli_distribution coin(0.5);

    std::vector<PromptRecord> prompts;
    std::vector<std::string> ids;
    std::vector<float> data;
    std::vector<JudgmentRecord> judgments;
    static const Split splits[] = {Split::train, Split::train, Split::train, Split::val,
                                   Split::test};

    for (std::size_t m = 0; m < categories.size(); ++m) {
        for (std::size_t p = 0; p < per_category; ++p) {
            PromptRecord rec;
            rec.id = categories[m] + "-" + std::to_string(p);
            rec.text = "demo " + categories[m] + " prompt " + std::to_string(p);
            rec.category = categories[m];
            rec.split = splits[p % 5];
            ids.push_back(rec.id);
            for (std::uint32_t d = 0; d < dim; ++d)
                data.push_back((d == m ? 1.0f : 0.0f) + noise(rng));
            for (std::size_t j = 0; j < catalog.size(); ++j) {
                std::bernoulli_distribution win(j == m ? specialist_win : generalist_win);
                judgments.push_back({rec.id, catalog.at(j).name,
                                     win(rng) ? Verdict::win : Verdict::loss});
            }
            prompts.push_back(std::move(rec));
        }
    }

    auto base = std::filesystem::path(out_dir);
    save_prompts(prompts, base / "prompts.jsonl");
    save_embeddings(EmbeddingMatrix(ids, dim, data), base / "embeddings.bin");
    save_catalog(catalog, base / "experts.json");
    save_judgments(judgments, base / "judgments.jsonl");

    // interim all-to-one-expert solution, for the first routing pass that
    // partitions prompts before any loss matrix exists
    {
        std::ofstream seed_solution(base / "seed_solution.json");
        seed_solution << "{\"category_to_expert\": {";
        bool first = true;
        for (const auto& c : categories) {
            seed_solution << (first ? "" : ", ") << '"' << c << "\": \"expert-7b\"";
            first = false;
        }
        seed_solution << ", \"general\": \"expert-7b\"}, \"objective\": 0, "
                         "\"selected_experts\": [\"expert-7b\"]}\n";
    }

    // a bursty trace skewed toward the small experts
    std::discrete_distribution<std::size_t> pick({40, 25, 18, 10, 7});
    std::uniform_real_distribution<double> gap(0.0, 0.08);
    std::uniform_int_distribution<std::uint64_t> tokens(16, 512);
    std::vector<TraceEvent> trace;
    double t = 0;
    for (int i = 0; i < 400; ++i) {
        t += gap(rng);
        trace.push_back({t, pick(rng), tokens(rng)});
    }
    save_trace(trace, catalog, base / "trace.jsonl");

    std::cout << "wrote " << prompts.size() << " prompts, " << judgments.size()
              << " judgments, " << trace.size() << " trace events to " << out_dir << "\n";
    return 0;
}
