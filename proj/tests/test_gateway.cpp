#include <doctest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "coe/gateway.hpp"
#include "test_support.hpp"

using namespace coe;
using coe::testing::make_clusters;
using coe::testing::TempDir;
using nlohmann::json;

namespace {

/// Minimal upstream/judge stub bound to an ephemeral port.
class MockServer {
public:
    explicit MockServer(httplib::Server::Handler handler) {
        server_.Post("/generate", handler);
        server_.Post("/judge", handler);
        server_.Post("/embed", handler);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockServer() {
        server_.stop();
        thread_.join();
    }
    int port() const { return port_; }
    std::string url(const std::string& path) const {
        return "http://127.0.0.1:" + std::to_string(port_) + path;
    }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

struct World {
    TempDir dir;
    coe::testing::ClusteredCorpus data;
    std::shared_ptr<const KnnRouter> router;
    ExpertCatalog catalog;
    RoutingTable table;

    World() : data(make_clusters(3, 30, 8, 0.02, 401)) {
        router = std::make_shared<const KnnRouter>(
            KnnRouter::from_corpus(data.corpus, 10, Distance::cosine, data.categories));
        catalog = ExpertCatalog::from_experts({{"alpha", 7}, {"beta", 27}, {"gamma", 70}});
        AssignmentSolution sol;
        sol.category_to_expert = {0, 1, 2};
        sol.y = {1, 1, 1};
        sol.selected_experts = {0, 1, 2};
        table = build_routing_table(router, catalog, sol, std::nullopt);

        save_router(*router, dir.path() / "router");
        save_catalog(catalog, dir.file("experts.json"));
        save_routing_table(table, dir.file("table.json"), "router", "experts.json");
    }

    GatewayConfig config() const {
        GatewayConfig c;
        c.routing_table_path = dir.file("table.json");
        c.request_timeout_sec = 5.0;
        return c;
    }

    json embedded_request(std::size_t category) const {
        auto center = coe::testing::cluster_center(data, category);
        return json{{"embedding", center}, {"prompt_id", "q"}};
    }
};

json post_json(int port, const std::string& path, const json& body, int expected_status) {
    httplib::Client client("127.0.0.1", port);
    auto res = client.Post(path, body.dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == expected_status);
    return json::parse(res->body);
}

}  // namespace

TEST_CASE("pre-embedded /route equals offline route") {
    World w;
    Gateway gateway(w.config(), w.table);
    const int port = gateway.start();

    for (std::size_t category = 0; category < 3; ++category) {
        auto body = post_json(port, "/route", w.embedded_request(category), 200);
        auto offline = route(w.table, coe::testing::cluster_center(w.data, category), "q");
        CHECK(body["expert"] == w.catalog.at(offline.expert).name);
        CHECK(body["category_index"] == offline.category);
        CHECK(body["entropy"].get<double>() == offline.entropy);
    }
    gateway.stop();
}

TEST_CASE("wrong embedding dimension is a 400-class error") {
    World w;
    Gateway gateway(w.config(), w.table);
    const int port = gateway.start();
    json bad{{"embedding", std::vector<float>(5, 0.1f)}};
    auto body = post_json(port, "/route", bad, 400);
    CHECK(body["error"]["category"] == "dimension");

    httplib::Client client("127.0.0.1", port);
    auto res = client.Post("/route", "this is not json", "application/json");
    REQUIRE(res);
    CHECK(res->status == 400);
    gateway.stop();
}

TEST_CASE("concurrent identical requests get identical decisions") {
    World w;
    Gateway gateway(w.config(), w.table);
    const int port = gateway.start();
    const std::string payload = w.embedded_request(1).dump();

    std::atomic<int> mismatches{0};
    auto worker = [&] {
        httplib::Client client("127.0.0.1", port);
        for (int i = 0; i < 250; ++i) {
            auto res = client.Post("/route", payload, "application/json");
            if (!res || res->status != 200) {
                ++mismatches;
                continue;
            }
            auto body = json::parse(res->body);
            if (body["expert"] != "beta") ++mismatches;
        }
    };
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    CHECK(mismatches == 0);
    gateway.stop();
}

TEST_CASE("generate proxies to the routed expert upstream") {
    World w;
    MockServer alpha([](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"served_by", "alpha"}}.dump(), "application/json");
    });
    MockServer beta([](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"served_by", "beta"}}.dump(), "application/json");
    });

    auto config = w.config();
    config.upstreams = {{"alpha", alpha.url("/generate")},
                        {"beta", beta.url("/generate")},
                        {"gamma", beta.url("/generate")}};
    Gateway gateway(config, w.table);
    const int port = gateway.start();

    httplib::Client client("127.0.0.1", port);
    auto res = client.Post("/generate", w.embedded_request(0).dump(), "application/json");
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(json::parse(res->body)["served_by"] == "alpha");
    CHECK(res->get_header_value("X-CoE-Expert") == "alpha");
    CHECK(res->get_header_value("X-CoE-Category") == "cat0");
    gateway.stop();
}

TEST_CASE("a multi-turn request routes on the current turn only") {
    World w;
    Gateway gateway(w.config(), w.table);
    const int port = gateway.start();
    json body{{"turns", json::array({json{{"embedding", coe::testing::cluster_center(w.data, 0)}},
                                     json{{"embedding", coe::testing::cluster_center(w.data, 2)}}})}};
    auto out = post_json(port, "/route", body, 200);
    CHECK(out["expert"] == "gamma");  // last turn's cluster
    gateway.stop();
}

TEST_CASE("a dead upstream is an upstream error, not a routing error") {
    World w;
    auto config = w.config();
    // a port from the ephemeral range that nothing listens on
    config.upstreams = {{"alpha", "http://127.0.0.1:1"},
                        {"beta", "http://127.0.0.1:1"},
                        {"gamma", "http://127.0.0.1:1"}};
    config.request_timeout_sec = 1.0;
    Gateway gateway(config, w.table);
    const int port = gateway.start();
    auto body = post_json(port, "/generate", w.embedded_request(0), 502);
    CHECK(body["error"]["category"] == "upstream");
    gateway.stop();
}

TEST_CASE("text requests use the embedding endpoint when configured") {
    World w;
    auto center = coe::testing::cluster_center(w.data, 1);
    MockServer embedder([center](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"embedding", center}}.dump(), "application/json");
    });

    SUBCASE("without an endpoint, text is rejected") {
        Gateway gateway(w.config(), w.table);
        const int port = gateway.start();
        auto body = post_json(port, "/route", json{{"text", "hello"}}, 400);
        CHECK(body.contains("error"));
        gateway.stop();
    }
    SUBCASE("with an endpoint, text routes like its embedding") {
        auto config = w.config();
        config.embedding_endpoint = embedder.url("/embed");
        Gateway gateway(config, w.table);
        const int port = gateway.start();
        auto body = post_json(port, "/route", json{{"text", "hello"}}, 200);
        CHECK(body["expert"] == "beta");
        gateway.stop();
    }
    SUBCASE("unreachable embedding service is a 502") {
        auto config = w.config();
        config.embedding_endpoint = "http://127.0.0.1:1/embed";
        config.request_timeout_sec = 1.0;
        Gateway gateway(config, w.table);
        const int port = gateway.start();
        auto body = post_json(port, "/route", json{{"text", "hello"}}, 502);
        CHECK(body["error"]["category"] == "upstream");
        gateway.stop();
    }
}

TEST_CASE("hot reload swaps tables atomically") {
    World w;
    Gateway gateway(w.config(), w.table);
    const int port = gateway.start();

    SUBCASE("reload with an identical table changes nothing") {
        auto before = post_json(port, "/route", w.embedded_request(0), 200);
        post_json(port, "/admin/reload", json{{"table", w.dir.file("table.json").string()}}, 200);
        auto after = post_json(port, "/route", w.embedded_request(0), 200);
        CHECK(before["expert"] == after["expert"]);
    }
    SUBCASE("reload with a remapped category takes effect") {
        AssignmentSolution remapped;
        remapped.category_to_expert = {2, 1, 0};  // cat0 now maps to gamma
        remapped.y = {1, 1, 1};
        remapped.selected_experts = {0, 1, 2};
        auto table2 = build_routing_table(w.router, w.catalog, remapped, std::nullopt);
        save_routing_table(table2, w.dir.file("table2.json"), "router", "experts.json");
        post_json(port, "/admin/reload", json{{"table", w.dir.file("table2.json").string()}},
                  200);
        auto body = post_json(port, "/route", w.embedded_request(0), 200);
        CHECK(body["expert"] == "gamma");
    }
    SUBCASE("an invalid table is rejected and the old one retained") {
        auto body = post_json(port, "/admin/reload",
                              json{{"table", w.dir.file("missing.json").string()}}, 400);
        CHECK(body.contains("error"));
        auto after = post_json(port, "/route", w.embedded_request(0), 200);
        CHECK(after["expert"] == "alpha");
    }
    gateway.stop();
}

TEST_CASE("reload rejects a table whose expert has no upstream") {
    World w;
    MockServer up([](const httplib::Request&, httplib::Response& res) {
        res.set_content("{}", "application/json");
    });
    auto config = w.config();
    // upstreams only for the experts mapped by a reduced table
    config.upstreams = {{"alpha", up.url("/generate")}, {"beta", up.url("/generate")}};

    AssignmentSolution small;
    small.category_to_expert = {0, 1, 0};
    small.y = {1, 1, 0};
    small.selected_experts = {0, 1};
    auto reduced = build_routing_table(w.router, w.catalog, small, std::nullopt);
    save_routing_table(reduced, w.dir.file("reduced.json"), "router", "experts.json");

    Gateway gateway(config, reduced);
    const int port = gateway.start();
    // full table maps to gamma, which has no upstream -> rejected
    auto body = post_json(port, "/admin/reload",
                          json{{"table", w.dir.file("table.json").string()}}, 400);
    CHECK(body.contains("error"));
    auto decision = post_json(port, "/route", w.embedded_request(2), 200);
    CHECK(decision["expert"] == "alpha");  // still the reduced mapping
    gateway.stop();
}

TEST_CASE("health and metrics endpoints respond") {
    World w;
    Gateway gateway(w.config(), w.table);
    const int port = gateway.start();
    httplib::Client client("127.0.0.1", port);
    auto health = client.Get("/healthz");
    REQUIRE(health);
    CHECK(health->status == 200);
    CHECK(json::parse(health->body)["status"] == "ok");

    post_json(port, "/route", w.embedded_request(1), 200);
    post_json(port, "/route", w.embedded_request(1), 200);
    auto metrics = client.Get("/metrics");
    REQUIRE(metrics);
    auto m = json::parse(metrics->body);
    CHECK(m["requests_total"] == 2);
    CHECK(m["per_expert_requests"]["beta"] == 2);
    std::size_t histogram_total = 0;
    for (const auto& c : m["entropy_histogram"]["counts"]) histogram_total += c.get<std::size_t>();
    CHECK(histogram_total == 2);
    gateway.stop();
}

TEST_CASE("judge collection is resumable and isolates failures") {
    TempDir dir;
    std::vector<PromptRecord> prompts;
    std::unordered_map<std::string, std::string> references;
    std::vector<CompletionRecord> completions;
    for (int i = 0; i < 10; ++i) {
        const std::string id = "p" + std::to_string(i);
        prompts.push_back({id, "prompt " + id, std::nullopt, std::nullopt});
        references[id] = "reference " + id;
        completions.push_back({id, "alpha", i == 3 ? "fail" : "fine"});
    }

    std::atomic<int> judge_calls{0};
    MockServer judge([&judge_calls](const httplib::Request& req, httplib::Response& res) {
        ++judge_calls;
        auto body = json::parse(req.body);
        if (body["completion"] == "fail") {
            res.status = 500;
            return;
        }
        res.set_content(json{{"verdict", "win"}}.dump(), "application/json");
    });

    JudgeOptions options;
    options.max_attempts = 2;
    options.initial_backoff = std::chrono::milliseconds(1);

    auto first = collect_judgments(prompts, references, completions, judge.url("/judge"),
                                   dir.file("verdicts.jsonl"), options);
    CHECK(first.records.size() == 9);
    CHECK(first.errors.size() == 1);
    CHECK(first.errors[0].prompt_id == "p3");
    CHECK(first.resumed == 0);
    for (const auto& r : first.records) CHECK(r.verdict == Verdict::win);

    // resume: the nine finished pairs are not re-requested
    const int calls_before = judge_calls.load();
    auto second = collect_judgments(prompts, references, completions, judge.url("/judge"),
                                    dir.file("verdicts.jsonl"), options);
    CHECK(second.resumed == 9);
    CHECK(second.requested == 0);
    CHECK(second.errors.size() == 1);                     // p3 still failing
    CHECK(judge_calls.load() == calls_before + options.max_attempts);  // only p3 retried
}

TEST_CASE("judge collection flags prompts without references") {
    TempDir dir;
    std::vector<PromptRecord> prompts{{"p0", "t", std::nullopt, std::nullopt}};
    std::unordered_map<std::string, std::string> references;  // empty
    std::vector<CompletionRecord> completions{{"p0", "alpha", "text"}};
    MockServer judge([](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"verdict", "win"}}.dump(), "application/json");
    });
    auto result = collect_judgments(prompts, references, completions, judge.url("/judge"),
                                    dir.file("v.jsonl"));
    CHECK(result.records.empty());
    REQUIRE(result.errors.size() == 1);
    CHECK(result.errors[0].message == "no reference completion");
}

TEST_CASE("completion and reference files load") {
    TempDir dir;
    {
        std::ofstream out(dir.file("completions.jsonl"));
        out << R"({"prompt_id":"p0","expert":"alpha","text":"hi"})" << "\n";
    }
    {
        std::ofstream out(dir.file("refs.jsonl"));
        out << R"({"prompt_id":"p0","text":"reference"})" << "\n";
    }
    auto completions = load_completions(dir.file("completions.jsonl"));
    REQUIRE(completions.size() == 1);
    CHECK(completions[0].expert == "alpha");
    auto references = load_references(dir.file("refs.jsonl"));
    CHECK(references.at("p0") == "reference");
}
