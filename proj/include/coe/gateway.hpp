#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "coe/routing.hpp"

namespace coe {

struct GatewayConfig {
    std::string listen_address = "127.0.0.1";
    int port = 0;  // 0 picks an ephemeral port
    std::filesystem::path routing_table_path;
    std::optional<std::string> embedding_endpoint;     // text requests need this
    std::map<std::string, std::string> upstreams;      // expert name -> URL; empty = decision-only
    double request_timeout_sec = 30.0;
};

GatewayConfig load_gateway_config(const std::filesystem::path& path);

/// HTTP front end over a routing table. Requests route against an immutable
/// table snapshot; reload swaps the snapshot atomically so concurrent callers
/// see either the old or the new table, never a mix.
///
/// Endpoints: POST /route, POST /generate, POST /admin/reload, GET /healthz,
/// GET /metrics.
class Gateway {
public:
    Gateway(GatewayConfig config, RoutingTable table);
    ~Gateway();

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    /// Binds and serves on a background thread; returns the bound port.
    int start();
    void stop();
    int port() const;

    /// Validates and atomically installs the table at `path`; throws and
    /// keeps the old table when the new one does not validate.
    void reload(const std::filesystem::path& path);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// --- judge client -------------------------------------------------------------

struct CompletionRecord {
    std::string prompt_id;
    std::string expert;
    std::string text;
};

std::vector<CompletionRecord> load_completions(const std::filesystem::path& path);
std::unordered_map<std::string, std::string> load_references(const std::filesystem::path& path);

struct JudgeOptions {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{50};
};

struct JudgeItemError {
    std::string prompt_id;
    std::string expert;
    std::string message;
};

struct JudgeCollectResult {
    std::vector<JudgmentRecord> records;  // resumed and newly collected
    std::vector<JudgeItemError> errors;
    std::size_t resumed = 0;    // pairs already present in the output file
    std::size_t requested = 0;  // live judge calls that produced a verdict
};

/// Collects one verdict per (prompt, expert) completion by POSTing
/// {prompt, reference, completion} to the judge endpoint. Verdicts append to
/// `output_path` as they arrive, so an interrupted run resumes without
/// re-requesting finished pairs. Judge failures are recorded per item.
JudgeCollectResult collect_judgments(std::span<const PromptRecord> prompts,
                                     const std::unordered_map<std::string, std::string>& references,
                                     std::span<const CompletionRecord> completions,
                                     const std::string& judge_url,
                                     const std::filesystem::path& output_path,
                                     const JudgeOptions& options = {});

}  // namespace coe
