#include "coe/gateway.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace coe {

using nlohmann::json;

GatewayConfig load_gateway_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) fail(ErrorCategory::format, "malformed gateway config " + path.string());

    GatewayConfig config;
    config.listen_address = j.value("listen_address", std::string("127.0.0.1"));
    config.port = j.value("port", 0);
    config.routing_table_path = j.at("routing_table").get<std::string>();
    if (j.contains("embedding_endpoint") && !j["embedding_endpoint"].is_null())
        config.embedding_endpoint = j["embedding_endpoint"].get<std::string>();
    if (j.contains("upstreams"))
        config.upstreams = j["upstreams"].get<std::map<std::string, std::string>>();
    config.request_timeout_sec = j.value("request_timeout_sec", 30.0);
    return config;
}

namespace {

/// Splits "http://host:port/path" into the client base and the path part.
std::pair<std::string, std::string> split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        fail(ErrorCategory::validation, "URL without scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

json error_body(ErrorCategory category, const std::string& message) {
    return json{{"error", {{"category", to_string(category)}, {"message", message}}}};
}

constexpr double kEntropyBinWidth = 0.1;
constexpr std::size_t kEntropyBins = 32;  // covers ln(M) for any realistic M

}  // namespace

struct Gateway::Impl {
    GatewayConfig config;
    httplib::Server server;
    std::thread serve_thread;
    int bound_port = 0;

    std::mutex table_mu;
    std::shared_ptr<const RoutingTable> table;

    std::mutex metrics_mu;
    std::uint64_t requests_total = 0;
    std::map<std::string, std::uint64_t> per_expert_requests;
    std::vector<std::uint64_t> entropy_histogram = std::vector<std::uint64_t>(kEntropyBins, 0);

    std::shared_ptr<const RoutingTable> snapshot() {
        std::lock_guard lock(table_mu);
        return table;
    }

    void install(std::shared_ptr<const RoutingTable> next) {
        std::lock_guard lock(table_mu);
        table = std::move(next);
    }

    /// Every expert the table can actually route to needs an upstream unless
    /// the gateway is decision-only (no upstreams configured at all).
    void validate_upstreams(const RoutingTable& t) const {
        if (config.upstreams.empty()) return;
        std::set<std::size_t> mapped(t.category_to_expert.begin(), t.category_to_expert.end());
        for (std::size_t j : mapped) {
            const std::string& name = t.catalog.at(j).name;
            if (!config.upstreams.count(name))
                fail(ErrorCategory::validation, "no upstream configured for expert '" + name + "'");
        }
    }

    void record_metrics(const RoutingDecision& decision, const RoutingTable& t) {
        std::lock_guard lock(metrics_mu);
        ++requests_total;
        per_expert_requests[t.catalog.at(decision.expert).name]++;
        auto bin = static_cast<std::size_t>(decision.entropy / kEntropyBinWidth);
        entropy_histogram[std::min(bin, kEntropyBins - 1)]++;
    }

    std::vector<float> embed_remote(const std::string& text) {
        if (!config.embedding_endpoint)
            fail(ErrorCategory::validation,
                 "gateway has no embedding endpoint; send a pre-embedded request");
        auto [base, path] = split_url(*config.embedding_endpoint);
        httplib::Client client(base);
        client.set_connection_timeout(std::chrono::duration<double>(config.request_timeout_sec));
        client.set_read_timeout(std::chrono::duration<double>(config.request_timeout_sec));
        auto res = client.Post(path, json{{"text", text}}.dump(), "application/json");
        if (!res || res->status != 200)
            fail(ErrorCategory::upstream, "embedding service unreachable");
        json j = json::parse(res->body, nullptr, false);
        if (j.is_discarded() || !j.contains("embedding"))
            fail(ErrorCategory::upstream, "embedding service returned a malformed body");
        return j["embedding"].get<std::vector<float>>();
    }

    /// Extracts the embedding to route on. Multi-turn bodies route on the
    /// last turn only.
    std::vector<float> request_embedding(const json& body) {
        const json* current = &body;
        if (body.contains("turns")) {
            const auto& turns = body["turns"];
            if (!turns.is_array() || turns.empty())
                fail(ErrorCategory::format, "turns must be a non-empty array");
            current = &turns.back();
        }
        if (current->contains("embedding"))
            return (*current)["embedding"].get<std::vector<float>>();
        if (current->contains("text")) return embed_remote((*current)["text"].get<std::string>());
        fail(ErrorCategory::format, "request needs 'text' or 'embedding'");
    }

    json decision_to_json(const RoutingDecision& decision, const RoutingTable& t) {
        const std::string expert_name = t.catalog.at(decision.expert).name;
        json out{{"category", t.router->categories().name_of(decision.category)},
                 {"category_index", decision.category},
                 {"entropy", decision.entropy},
                 {"expert", expert_name},
                 {"expert_index", decision.expert},
                 {"expert_params_billions", decision.expert_params_billions}};
        auto upstream = config.upstreams.find(expert_name);
        if (upstream != config.upstreams.end()) out["expert_url"] = upstream->second;
        return out;
    }

    void handle_route(const httplib::Request& req, httplib::Response& res) {
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) {
            res.status = 400;
            res.set_content(error_body(ErrorCategory::format, "malformed JSON body").dump(),
                            "application/json");
            return;
        }
        auto t = snapshot();
        try {
            std::vector<float> embedding = request_embedding(body);
            RoutingDecision decision =
                route(*t, embedding, body.value("prompt_id", std::string()));
            record_metrics(decision, *t);
            res.set_content(decision_to_json(decision, *t).dump(), "application/json");
        } catch (const Error& e) {
            res.status = e.category() == ErrorCategory::upstream ? 502 : 400;
            res.set_content(error_body(e.category(), e.what()).dump(), "application/json");
        } catch (const json::exception& e) {
            res.status = 400;
            res.set_content(error_body(ErrorCategory::format, e.what()).dump(),
                            "application/json");
        }
    }

    void handle_generate(const httplib::Request& req, httplib::Response& res) {
        json body = json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) {
            res.status = 400;
            res.set_content(error_body(ErrorCategory::format, "malformed JSON body").dump(),
                            "application/json");
            return;
        }
        auto t = snapshot();
        RoutingDecision decision;
        std::string expert_name;
        try {
            decision = route(*t, request_embedding(body), body.value("prompt_id", std::string()));
            record_metrics(decision, *t);
            expert_name = t->catalog.at(decision.expert).name;
        } catch (const Error& e) {
            res.status = e.category() == ErrorCategory::upstream ? 502 : 400;
            res.set_content(error_body(e.category(), e.what()).dump(), "application/json");
            return;
        } catch (const json::exception& e) {
            res.status = 400;
            res.set_content(error_body(ErrorCategory::format, e.what()).dump(),
                            "application/json");
            return;
        }

        res.set_header("X-CoE-Expert", expert_name);
        res.set_header("X-CoE-Category", t->router->categories().name_of(decision.category));
        res.set_header("X-CoE-Entropy", std::to_string(decision.entropy));

        auto upstream = config.upstreams.find(expert_name);
        if (upstream == config.upstreams.end()) {
            res.status = 503;
            res.set_content(error_body(ErrorCategory::validation,
                                       "no upstream for expert '" + expert_name + "'")
                                .dump(),
                            "application/json");
            return;
        }
        auto [base, path] = split_url(upstream->second);
        httplib::Client client(base);
        client.set_connection_timeout(std::chrono::duration<double>(config.request_timeout_sec));
        client.set_read_timeout(std::chrono::duration<double>(config.request_timeout_sec));
        auto relay = client.Post(path, req.body, "application/json");
        if (!relay) {
            res.status = 502;
            res.set_content(error_body(ErrorCategory::upstream,
                                       "upstream '" + expert_name + "' unreachable")
                                .dump(),
                            "application/json");
            return;
        }
        res.status = relay->status;
        std::string content_type = relay->get_header_value("Content-Type");
        if (content_type.empty()) content_type = "application/json";
        res.set_content(relay->body, content_type);
    }

    void handle_reload(const httplib::Request& req, httplib::Response& res) {
        std::filesystem::path path = config.routing_table_path;
        if (!req.body.empty()) {
            json body = json::parse(req.body, nullptr, false);
            if (!body.is_discarded() && body.contains("table"))
                path = body["table"].get<std::string>();
        }
        try {
            RoutingTable next = load_routing_table(path);
            validate_upstreams(next);
            install(std::make_shared<const RoutingTable>(std::move(next)));
            res.set_content(json{{"status", "reloaded"}, {"table", path.string()}}.dump(),
                            "application/json");
        } catch (const Error& e) {
            res.status = 400;
            res.set_content(error_body(e.category(), e.what()).dump(), "application/json");
        }
    }

    void handle_metrics(httplib::Response& res) {
        std::lock_guard lock(metrics_mu);
        json edges = json::array();
        for (std::size_t b = 0; b <= kEntropyBins; ++b) edges.push_back(b * kEntropyBinWidth);
        res.set_content(json{{"requests_total", requests_total},
                             {"per_expert_requests", per_expert_requests},
                             {"entropy_histogram",
                              {{"bin_edges", edges}, {"counts", entropy_histogram}}}}
                            .dump(),
                        "application/json");
    }
};

Gateway::Gateway(GatewayConfig config, RoutingTable table) : impl_(std::make_unique<Impl>()) {
    impl_->config = std::move(config);
    validate_routing_table(table);
    impl_->validate_upstreams(table);
    impl_->table = std::make_shared<const RoutingTable>(std::move(table));

    impl_->server.Post("/route", [this](const httplib::Request& req, httplib::Response& res) {
        impl_->handle_route(req, res);
    });
    impl_->server.Post("/generate", [this](const httplib::Request& req, httplib::Response& res) {
        impl_->handle_generate(req, res);
    });
    impl_->server.Post("/admin/reload",
                       [this](const httplib::Request& req, httplib::Response& res) {
                           impl_->handle_reload(req, res);
                       });
    impl_->server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"status", "ok"}}.dump(), "application/json");
    });
    impl_->server.Get("/metrics", [this](const httplib::Request&, httplib::Response& res) {
        impl_->handle_metrics(res);
    });
}

Gateway::~Gateway() { stop(); }

int Gateway::start() {
    if (impl_->config.port == 0) {
        impl_->bound_port = impl_->server.bind_to_any_port(impl_->config.listen_address);
        if (impl_->bound_port <= 0) fail(ErrorCategory::io, "cannot bind gateway port");
    } else {
        if (!impl_->server.bind_to_port(impl_->config.listen_address, impl_->config.port))
            fail(ErrorCategory::io,
                 "cannot bind " + impl_->config.listen_address + ":" +
                     std::to_string(impl_->config.port));
        impl_->bound_port = impl_->config.port;
    }
    impl_->serve_thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return impl_->bound_port;
}

void Gateway::stop() {
    if (impl_->serve_thread.joinable()) {
        impl_->server.stop();
        impl_->serve_thread.join();
    }
}

int Gateway::port() const { return impl_->bound_port; }

void Gateway::reload(const std::filesystem::path& path) {
    RoutingTable next = load_routing_table(path);
    impl_->validate_upstreams(next);
    impl_->install(std::make_shared<const RoutingTable>(std::move(next)));
}

// --- judge client ----------------------------------------------------------------

std::vector<CompletionRecord> load_completions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
    std::vector<CompletionRecord> completions;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            fail(ErrorCategory::format,
                 path.string() + ":" + std::to_string(lineno) + ": malformed completion");
        completions.push_back({j.at("prompt_id").get<std::string>(),
                               j.at("expert").get<std::string>(),
                               j.at("text").get<std::string>()});
    }
    return completions;
}

std::unordered_map<std::string, std::string> load_references(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorCategory::io, "cannot open " + path.string());
    std::unordered_map<std::string, std::string> references;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            fail(ErrorCategory::format,
                 path.string() + ":" + std::to_string(lineno) + ": malformed reference");
        references[j.at("prompt_id").get<std::string>()] = j.at("text").get<std::string>();
    }
    return references;
}

JudgeCollectResult collect_judgments(std::span<const PromptRecord> prompts,
                                     const std::unordered_map<std::string, std::string>& references,
                                     std::span<const CompletionRecord> completions,
                                     const std::string& judge_url,
                                     const std::filesystem::path& output_path,
                                     const JudgeOptions& options) {
    std::unordered_map<std::string, const PromptRecord*> by_id;
    for (const auto& p : prompts) by_id[p.id] = &p;

    JudgeCollectResult result;
    std::set<std::string> done;  // "prompt\texpert" pairs already judged
    if (std::filesystem::exists(output_path)) {
        for (const auto& rec : load_judgments(output_path)) {
            done.insert(rec.prompt_id + "\t" + rec.expert);
            result.records.push_back(rec);
        }
        result.resumed = result.records.size();
    }

    std::ofstream out(output_path, std::ios::app);
    if (!out) fail(ErrorCategory::io, "cannot write " + output_path.string());

    auto [base, path] = split_url(judge_url);
    httplib::Client client(base);

    for (const auto& completion : completions) {
        const std::string key = completion.prompt_id + "\t" + completion.expert;
        if (done.count(key)) continue;

        auto prompt = by_id.find(completion.prompt_id);
        if (prompt == by_id.end()) {
            result.errors.push_back({completion.prompt_id, completion.expert, "unknown prompt"});
            continue;
        }
        auto reference = references.find(completion.prompt_id);
        if (reference == references.end()) {
            result.errors.push_back(
                {completion.prompt_id, completion.expert, "no reference completion"});
            continue;
        }

        const std::string body = json{{"prompt", prompt->second->text},
                                      {"reference", reference->second},
                                      {"completion", completion.text}}
                                     .dump();
        std::optional<Verdict> verdict;
        std::string last_error = "judge unreachable";
        auto backoff = options.initial_backoff;
        for (int attempt = 0; attempt < options.max_attempts; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(backoff);
                backoff *= 2;
            }
            auto res = client.Post(path, body, "application/json");
            if (!res) continue;
            if (res->status != 200) {
                last_error = "judge returned status " + std::to_string(res->status);
                continue;
            }
            json j = json::parse(res->body, nullptr, false);
            if (j.is_discarded() || !j.contains("verdict")) {
                last_error = "judge returned a malformed body";
                continue;
            }
            try {
                verdict = parse_verdict(j["verdict"].get<std::string>());
            } catch (const Error& e) {
                last_error = e.what();
            }
            break;
        }

        if (!verdict) {
            result.errors.push_back({completion.prompt_id, completion.expert, last_error});
            continue;
        }
        JudgmentRecord rec{completion.prompt_id, completion.expert, *verdict};
        out << json{{"prompt_id", rec.prompt_id},
                    {"expert", rec.expert},
                    {"verdict", to_string(rec.verdict)}}
                   .dump()
            << '\n';
        out.flush();
        done.insert(key);
        result.records.push_back(std::move(rec));
        ++result.requested;
    }
    return result;
}

}  // namespace coe
